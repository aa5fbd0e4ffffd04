/**
 * Wire protocol for the grasp session service.
 *
 * Control messages are JSON; displacement fields ride inside them as base64
 * little-endian float32, three components per node.
 */

export type Mode = "kelvinlet" | "neural" | "fem";

export interface GraspMsg {
  node: number;
  u: [number, number, number];
}

export interface HelloMsg {
  t: "hello";
}

export interface SetModeMsg {
  t: "set_mode";
  mode: Mode;
}

export interface SetGraspsMsg {
  t: "set_grasps";
  grasps: GraspMsg[];
}

export interface ClearMsg {
  t: "clear";
}

export type ClientMsg = HelloMsg | SetModeMsg | SetGraspsMsg | ClearMsg;

export interface MeshMsg {
  t: "mesh";
  nodes: number;
  positions_b64: string;
  surface_tris: number[];
  regions: Record<string, number>;
  unit: string;
  modes: Mode[];
}

export interface ModeMsg {
  t: "mode";
  mode: Mode;
  realtime: boolean;
}

export interface FieldMsg {
  t: "field";
  seq: number;
  mode: Mode;
  u_b64: string;
  compute_ms: number;
  realtime: boolean;
  dcm_vs_prev_mode?: number;
}

export interface ProgressMsg {
  t: "progress";
  seq: number;
  stage: string;
  realtime: boolean;
}

export interface ErrMsg {
  t: "err";
  code: number;
  msg: string;
}

export type ServerMsg = MeshMsg | ModeMsg | FieldMsg | ProgressMsg | ErrMsg;

export const MAX_GRASPS = 2;

function base64ToBytes(b64: string): Uint8Array {
  if (typeof Buffer !== "undefined") {
    return new Uint8Array(Buffer.from(b64, "base64"));
  }
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

function bytesToBase64(bytes: Uint8Array): string {
  if (typeof Buffer !== "undefined") {
    return Buffer.from(bytes).toString("base64");
  }
  let bin = "";
  for (let i = 0; i < bytes.length; i++) bin += String.fromCharCode(bytes[i]);
  return btoa(bin);
}

/** Decode a base64 field payload into a flat [x0,y0,z0,x1,...] array. */
export function decodeField(b64: string): Float32Array {
  const bytes = base64ToBytes(b64);
  if (bytes.byteLength % 12 !== 0) {
    throw new Error(`field payload is ${bytes.byteLength} bytes, not 3xf32 per node`);
  }
  const n = bytes.byteLength / 4;
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) out[i] = view.getFloat32(4 * i, true);
  return out;
}

/** Encode a flat float array as the base64 little-endian payload. */
export function encodeField(field: ArrayLike<number>): string {
  const bytes = new Uint8Array(field.length * 4);
  const view = new DataView(bytes.buffer);
  for (let i = 0; i < field.length; i++) view.setFloat32(4 * i, field[i], true);
  return bytesToBase64(bytes);
}

export function parseServerMsg(data: string): ServerMsg {
  const msg = JSON.parse(data) as { t?: string };
  if (
    msg.t !== "mesh" && msg.t !== "mode" && msg.t !== "field" &&
    msg.t !== "progress" && msg.t !== "err"
  ) {
    throw new Error(`unknown server message ${JSON.stringify(msg.t)}`);
  }
  return msg as ServerMsg;
}
