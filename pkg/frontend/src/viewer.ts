/**
 * 3D viewer for a live grasp session.
 *
 * Renders the surface mesh flat-shaded with a per-mode tint, lets the user
 * click surface nodes to attach up to two grasp handles, drag them in the
 * camera plane, and switch backend modes. Rendered geometry is always
 * rest positions plus the latest accepted displacement field.
 */

import * as THREE from "three";
import { OrbitControls } from "three/examples/jsm/controls/OrbitControls.js";

import { SessionClient } from "./client.js";
import { decodeField, GraspMsg, MeshMsg, Mode } from "./protocol.js";

/** Longest drag the surrogate saw during training (desk-scale grasp cuboid
 * diagonal); UI drags are clamped here with a warning badge. */
const CUBOID = [
  [-0.0225, 0.0125],
  [-0.0225, 0.0125],
  [-0.015, 0.0225],
];
export const DRAG_CLAMP_M = Math.hypot(
  ...CUBOID.map(([lo, hi]) => hi - lo)
);

const PICK_RADIUS_M = 0.02;
const MODE_TINT: Record<Mode, number> = {
  kelvinlet: 0x7fb2d9,
  neural: 0x9fd98f,
  fem: 0xd9a97f,
};

interface Handle {
  node: number;
  offset: THREE.Vector3;
  marker: THREE.Mesh;
}

export class Viewer {
  private readonly client: SessionClient;
  private readonly scene = new THREE.Scene();
  private readonly camera: THREE.PerspectiveCamera;
  private readonly renderer: THREE.WebGLRenderer;
  private readonly controls: OrbitControls;
  private readonly raycaster = new THREE.Raycaster();
  private geometry: THREE.BufferGeometry | null = null;
  private material: THREE.MeshLambertMaterial | null = null;
  private rest: Float32Array = new Float32Array(0);
  private handles: Handle[] = [];
  private dragging: Handle | null = null;
  private dragPlane = new THREE.Plane();
  private mode: Mode = "kelvinlet";
  private frames = 0;
  private lastFpsTime = performance.now();

  readonly statusEl: HTMLElement;
  readonly clampBadge: HTMLElement;

  constructor(
    canvas: HTMLCanvasElement,
    statusEl: HTMLElement,
    clampBadge: HTMLElement,
    client: SessionClient
  ) {
    this.client = client;
    this.statusEl = statusEl;
    this.clampBadge = clampBadge;
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.renderer.setSize(canvas.clientWidth, canvas.clientHeight, false);
    this.camera = new THREE.PerspectiveCamera(
      40,
      canvas.clientWidth / canvas.clientHeight,
      0.001,
      10
    );
    this.camera.position.set(0.25, 0.18, 0.25);
    this.controls = new OrbitControls(this.camera, canvas);
    this.scene.background = new THREE.Color(0x14171c);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.45));
    const key = new THREE.DirectionalLight(0xffffff, 1.0);
    key.position.set(1, 2, 1.5);
    this.scene.add(key);

    canvas.addEventListener("pointerdown", (ev) => this.onPointerDown(ev));
    canvas.addEventListener("pointermove", (ev) => this.onPointerMove(ev));
    canvas.addEventListener("pointerup", () => this.onPointerUp());

    client.handlers.onField = (msg) => {
      this.applyField(decodeField(msg.u_b64));
      let text = `${msg.mode} ${msg.compute_ms.toFixed(1)} ms`;
      if (msg.dcm_vs_prev_mode !== undefined) {
        text += ` | DCM vs prev mode ${msg.dcm_vs_prev_mode.toFixed(1)}`;
      }
      this.setStatus(text);
    };
    client.handlers.onMode = (msg) => {
      this.mode = msg.mode;
      this.material?.color.setHex(MODE_TINT[msg.mode]);
      this.setStatus(`mode ${msg.mode}${msg.realtime ? "" : " (batch)"}`);
    };
    client.handlers.onProgress = (msg) =>
      this.setStatus(`${msg.stage} (seq ${msg.seq})...`);
    client.handlers.onError = (msg) =>
      this.setStatus(`error ${msg.code}: ${msg.msg}`);
    client.handlers.onClose = () => this.setStatus("disconnected", true);

    const loop = () => {
      requestAnimationFrame(loop);
      this.controls.update();
      this.renderer.render(this.scene, this.camera);
      this.frames += 1;
      const now = performance.now();
      if (now - this.lastFpsTime > 1000) {
        const fps = (1000 * this.frames) / (now - this.lastFpsTime);
        this.frames = 0;
        this.lastFpsTime = now;
        const el = document.getElementById("fps");
        if (el) el.textContent = `${fps.toFixed(0)} fps`;
      }
    };
    loop();
  }

  buildMesh(msg: MeshMsg): void {
    this.rest = decodeField(msg.positions_b64);
    const geo = new THREE.BufferGeometry();
    geo.setAttribute(
      "position",
      new THREE.BufferAttribute(this.rest.slice(), 3)
    );
    geo.setIndex(msg.surface_tris);
    geo.computeVertexNormals();
    this.geometry = geo;
    this.material = new THREE.MeshLambertMaterial({
      color: MODE_TINT[this.mode],
      flatShading: true,
      side: THREE.DoubleSide,
    });
    this.scene.add(new THREE.Mesh(geo, this.material));
    const center = new THREE.Box3().setFromObject(this.scene).getCenter(
      new THREE.Vector3()
    );
    this.controls.target.copy(center);
    this.setStatus(`${msg.nodes} nodes, modes: ${msg.modes.join(", ")}`);
  }

  setMode(mode: Mode): void {
    this.client.setMode(mode);
  }

  /** Rendered positions are rest positions plus the field, always. */
  private applyField(field: Float32Array): void {
    if (!this.geometry) return;
    const pos = this.geometry.getAttribute("position") as THREE.BufferAttribute;
    const arr = pos.array as Float32Array;
    for (let i = 0; i < this.rest.length; i++) arr[i] = this.rest[i] + field[i];
    pos.needsUpdate = true;
    this.geometry.computeVertexNormals();
    for (const h of this.handles) {
      h.marker.position.set(
        arr[3 * h.node],
        arr[3 * h.node + 1],
        arr[3 * h.node + 2]
      );
    }
  }

  private pointerRay(ev: PointerEvent): THREE.Raycaster {
    const rect = (ev.target as HTMLElement).getBoundingClientRect();
    const ndc = new THREE.Vector2(
      (2 * (ev.clientX - rect.left)) / rect.width - 1,
      (-2 * (ev.clientY - rect.top)) / rect.height + 1
    );
    this.raycaster.setFromCamera(ndc, this.camera);
    return this.raycaster;
  }

  /** Nearest surface node to the clicked point, within the pick radius. */
  pickNode(ev: PointerEvent): number | null {
    if (!this.geometry) return null;
    const hits = this.pointerRay(ev).intersectObjects(this.scene.children);
    const hit = hits.find((h) => (h.object as THREE.Mesh).geometry === this.geometry);
    if (!hit || !hit.face) return null;
    const pos = this.geometry.getAttribute("position") as THREE.BufferAttribute;
    let best = -1;
    let bestD = PICK_RADIUS_M;
    for (const vi of [hit.face.a, hit.face.b, hit.face.c]) {
      const d = hit.point.distanceTo(
        new THREE.Vector3().fromBufferAttribute(pos, vi)
      );
      if (d < bestD) {
        best = vi;
        bestD = d;
      }
    }
    return best >= 0 ? best : null;
  }

  private onPointerDown(ev: PointerEvent): void {
    const node = this.pickNode(ev);
    if (node === null) return;
    let handle = this.handles.find((h) => h.node === node);
    if (!handle) {
      if (this.handles.length >= 2) return;
      const marker = new THREE.Mesh(
        new THREE.SphereGeometry(0.004),
        new THREE.MeshBasicMaterial({ color: 0xffe066 })
      );
      marker.position.set(
        this.rest[3 * node],
        this.rest[3 * node + 1],
        this.rest[3 * node + 2]
      );
      this.scene.add(marker);
      handle = { node, offset: new THREE.Vector3(), marker };
      this.handles.push(handle);
    }
    this.dragging = handle;
    this.controls.enabled = false;
    // drag in the camera-facing plane through the handle's rest position
    const restP = new THREE.Vector3(
      this.rest[3 * node],
      this.rest[3 * node + 1],
      this.rest[3 * node + 2]
    );
    const normal = this.camera.getWorldDirection(new THREE.Vector3());
    this.dragPlane.setFromNormalAndCoplanarPoint(normal, restP);
  }

  private onPointerMove(ev: PointerEvent): void {
    if (!this.dragging) return;
    const hit = new THREE.Vector3();
    if (!this.pointerRay(ev).ray.intersectPlane(this.dragPlane, hit)) return;
    const node = this.dragging.node;
    const restP = new THREE.Vector3(
      this.rest[3 * node],
      this.rest[3 * node + 1],
      this.rest[3 * node + 2]
    );
    const offset = hit.sub(restP);
    const clamped = offset.length() > DRAG_CLAMP_M;
    if (clamped) offset.setLength(DRAG_CLAMP_M);
    this.clampBadge.style.display = clamped ? "inline" : "none";
    this.dragging.offset.copy(offset);
    this.client.setGrasps(this.graspState());
  }

  private onPointerUp(): void {
    if (this.dragging) this.client.flush();
    this.dragging = null;
    this.controls.enabled = true;
  }

  clear(): void {
    for (const h of this.handles) this.scene.remove(h.marker);
    this.handles = [];
    this.clampBadge.style.display = "none";
    this.client.clearGrasps();
  }

  private graspState(): GraspMsg[] {
    return this.handles.map((h) => ({
      node: h.node,
      u: [h.offset.x, h.offset.y, h.offset.z],
    }));
  }

  private setStatus(text: string, isError = false): void {
    this.statusEl.textContent = text;
    this.statusEl.style.color = isError ? "#e07070" : "#c8d0da";
  }
}
