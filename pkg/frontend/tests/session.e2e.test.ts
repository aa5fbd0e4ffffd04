/**
 * End-to-end test against a real `graspsim serve` instance.
 *
 * Spawns the Python server on a demo organ mesh, drives a scripted drag of
 * 100 grasp updates over the websocket, and checks that
 *   - field replies are coalesced (far fewer replies than updates in fem
 *     mode, where each solve takes long enough for updates to pile up),
 *   - the final reply answers the final update, and
 *   - its payload matches a direct library call byte for byte.
 */

import { execFileSync, spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, dirname } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WebSocket from "ws";

import { SessionClient, SessionSocket } from "../src/client.js";
import { FieldMsg, GraspMsg } from "../src/protocol.js";

const HELPERS = join(dirname(fileURLToPath(import.meta.url)), "helpers");
const PORT = 8701 + Math.floor(Math.random() * 500);
const URL = `ws://127.0.0.1:${PORT}/session`;

let workdir: string;
let meshPath: string;
let dragNode: number;
let server: ChildProcess;

function expectedField(mode: string, node: number, u: number[]): string {
  return execFileSync(
    "python3",
    [join(HELPERS, "expected_field.py"), meshPath, mode, String(node),
     JSON.stringify(u)],
    { encoding: "utf8" }
  ).trim();
}

async function waitForServer(): Promise<void> {
  const deadline = Date.now() + 60_000;
  for (;;) {
    try {
      await new Promise<void>((resolve, reject) => {
        const ws = new WebSocket(URL);
        ws.on("open", () => {
          ws.close();
          resolve();
        });
        ws.on("error", reject);
      });
      return;
    } catch {
      if (Date.now() > deadline) throw new Error("server did not come up");
      await new Promise((r) => setTimeout(r, 250));
    }
  }
}

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), "graspsim-e2e-"));
  meshPath = join(workdir, "organ.json");
  const info = JSON.parse(
    execFileSync("python3", [join(HELPERS, "setup_mesh.py"), meshPath], {
      encoding: "utf8",
    })
  );
  dragNode = info.node;
  server = spawn(
    "python3",
    ["-m", "graspsim.cli", "serve", "--mesh", meshPath, "--port", String(PORT)],
    { stdio: "ignore" }
  );
  await waitForServer();
});

afterAll(() => {
  server?.kill();
  rmSync(workdir, { recursive: true, force: true });
});

/** Connects a client whose outgoing messages are sent immediately, so the
 * full scripted update sequence reaches the server. */
async function openSession() {
  const client = new SessionClient({
    socketFactory: (url) => new WebSocket(url) as unknown as SessionSocket,
    scheduler: (cb) => cb(),
  });
  const mesh = await client.connect(URL);
  return { client, mesh };
}

/** Sends a 100-update drag and resolves once the reply to the final update
 * arrives. Returns every field reply seen. */
function scriptedDrag(
  client: SessionClient,
  makeGrasps: (i: number) => GraspMsg[],
  updates = 100
): Promise<FieldMsg[]> {
  return new Promise((resolve, reject) => {
    const fields: FieldMsg[] = [];
    const finalSeq = updates;
    client.handlers.onField = (msg) => {
      fields.push(msg);
      if (msg.seq === finalSeq) resolve(fields);
    };
    client.handlers.onError = (msg) =>
      reject(new Error(`server error ${msg.code}: ${msg.msg}`));
    for (let i = 1; i <= updates; i++) client.setGrasps(makeGrasps(i));
  });
}

describe("scripted drag against a live server", () => {
  it("reports the organ mesh on hello", async () => {
    const { client, mesh } = await openSession();
    expect(mesh.nodes).toBe(512);
    expect(mesh.modes).toEqual(["kelvinlet", "fem"]);
    expect(mesh.surface_tris.length % 3).toBe(0);
    client.close();
  });

  it("answers a 100-update drag with the final state, bit-exact (kelvinlet)", async () => {
    const { client } = await openSession();
    const u = (i: number): [number, number, number] => [0.0002 * i, 0.0001 * i, 0];
    const fields = await scriptedDrag(client, (i) => [
      { node: dragNode, u: u(i) },
    ]);
    expect(fields.length).toBeLessThanOrEqual(100);
    const last = fields.at(-1)!;
    expect(last.seq).toBe(100);
    expect(last.mode).toBe("kelvinlet");
    expect(last.u_b64).toBe(expectedField("kelvinlet", dragNode, u(100)));
    client.close();
  });

  it("coalesces a 100-update drag in fem mode, final field bit-exact", async () => {
    const { client } = await openSession();
    await new Promise<void>((resolve) => {
      client.handlers.onMode = () => resolve();
      client.setMode("fem");
    });
    const u = (i: number): [number, number, number] => [0, -0.0001 * i, 0.00005 * i];
    const fields = await scriptedDrag(client, (i) => [
      { node: dragNode, u: u(i) },
    ]);
    // each solve takes long enough that the burst piles up behind it: the
    // single-flight worker answers only a handful of states
    expect(fields.length).toBeLessThan(50);
    const last = fields.at(-1)!;
    expect(last.seq).toBe(100);
    expect(last.mode).toBe("fem");
    expect(last.u_b64).toBe(expectedField("fem", dragNode, u(100)));
    client.close();
  }, 300_000);
});
