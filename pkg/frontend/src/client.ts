/**
 * Session client with frame-rate drag coalescing.
 *
 * The server already answers only the newest pending grasp state; the client
 * keeps its side of that contract by sending at most one set_grasps message
 * per animation frame, whatever rate the pointer events arrive at. Stale
 * field replies (older seq than one already applied) are dropped.
 */

import {
  decodeField,
  ErrMsg,
  FieldMsg,
  GraspMsg,
  MAX_GRASPS,
  MeshMsg,
  Mode,
  ModeMsg,
  ProgressMsg,
  parseServerMsg,
} from "./protocol.js";

/** The subset of the WebSocket surface the client needs; both the browser
 * WebSocket and the "ws" package satisfy it. */
export interface SessionSocket {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SessionSocket;

/** Schedules a callback for the next animation frame. */
export type FrameScheduler = (cb: () => void) => void;

function defaultScheduler(): FrameScheduler {
  if (typeof requestAnimationFrame === "function") {
    return (cb) => requestAnimationFrame(() => cb());
  }
  return (cb) => setTimeout(cb, 16);
}

export interface ClientOptions {
  socketFactory?: SocketFactory;
  scheduler?: FrameScheduler;
}

export interface ClientHandlers {
  onField?: (msg: FieldMsg, field: Float32Array) => void;
  onMode?: (msg: ModeMsg) => void;
  onProgress?: (msg: ProgressMsg) => void;
  onError?: (msg: ErrMsg) => void;
  onClose?: () => void;
}

export class SessionClient {
  private sock: SessionSocket | null = null;
  private readonly makeSocket: SocketFactory;
  private readonly schedule: FrameScheduler;
  private pendingGrasps: GraspMsg[] | null = null;
  private flushQueued = false;
  private lastFieldSeq = 0;
  /** set_grasps messages actually put on the wire. */
  sentGraspMessages = 0;
  handlers: ClientHandlers = {};
  mesh: MeshMsg | null = null;

  constructor(opts: ClientOptions = {}) {
    this.makeSocket =
      opts.socketFactory ??
      ((url) => new WebSocket(url) as unknown as SessionSocket);
    this.schedule = opts.scheduler ?? defaultScheduler();
  }

  /** Opens the socket, sends hello, resolves with the mesh description. */
  connect(url: string): Promise<MeshMsg> {
    return new Promise((resolve, reject) => {
      const sock = this.makeSocket(url);
      this.sock = sock;
      sock.onerror = (ev) => reject(new Error(`websocket error: ${ev}`));
      sock.onclose = () => {
        this.sock = null;
        this.handlers.onClose?.();
      };
      sock.onopen = () => sock.send(JSON.stringify({ t: "hello" }));
      sock.onmessage = (ev) => {
        const msg = parseServerMsg(String(ev.data));
        if (msg.t === "mesh") {
          this.mesh = msg;
          sock.onerror = () => this.handlers.onClose?.();
          resolve(msg);
          return;
        }
        this.dispatch(msg);
      };
    });
  }

  private dispatch(msg: Exclude<ReturnType<typeof parseServerMsg>, MeshMsg>) {
    switch (msg.t) {
      case "field":
        if (msg.seq <= this.lastFieldSeq) return; // stale reply
        this.lastFieldSeq = msg.seq;
        this.handlers.onField?.(msg, decodeField(msg.u_b64));
        return;
      case "mode":
        this.handlers.onMode?.(msg);
        return;
      case "progress":
        this.handlers.onProgress?.(msg);
        return;
      case "err":
        this.handlers.onError?.(msg);
        return;
    }
  }

  get connected(): boolean {
    return this.sock !== null;
  }

  setMode(mode: Mode): void {
    this.require().send(JSON.stringify({ t: "set_mode", mode }));
  }

  /**
   * Updates the desired grasp state. Calls within one animation frame are
   * coalesced: only the newest state is sent when the frame fires.
   */
  setGrasps(grasps: GraspMsg[]): void {
    if (grasps.length > MAX_GRASPS) {
      throw new Error(`at most ${MAX_GRASPS} grasps`);
    }
    this.pendingGrasps = grasps.map((g) => ({ node: g.node, u: [...g.u] }));
    if (this.flushQueued) return;
    this.flushQueued = true;
    this.schedule(() => this.flush());
  }

  /** Sends the pending grasp state immediately (end-of-drag). */
  flush(): void {
    this.flushQueued = false;
    if (this.pendingGrasps === null || this.sock === null) return;
    const grasps = this.pendingGrasps;
    this.pendingGrasps = null;
    this.sock.send(JSON.stringify({ t: "set_grasps", grasps }));
    this.sentGraspMessages += 1;
  }

  clearGrasps(): void {
    this.pendingGrasps = null;
    this.require().send(JSON.stringify({ t: "clear" }));
  }

  close(): void {
    this.sock?.close();
    this.sock = null;
  }

  private require(): SessionSocket {
    if (this.sock === null) throw new Error("not connected");
    return this.sock;
  }
}
