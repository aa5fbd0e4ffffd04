/** Entry point: connect to the session service and wire up the viewer. */

import { SessionClient } from "./client.js";
import { Mode } from "./protocol.js";
import { Viewer } from "./viewer.js";

async function main(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const url = params.get("url") ?? "ws://localhost:8765/session";

  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const status = document.getElementById("status") as HTMLElement;
  const badge = document.getElementById("clamp-badge") as HTMLElement;
  canvas.width = canvas.clientWidth;
  canvas.height = canvas.clientHeight;

  const client = new SessionClient();
  const viewer = new Viewer(canvas, status, badge, client);
  status.textContent = `connecting to ${url}...`;
  try {
    const mesh = await client.connect(url);
    viewer.buildMesh(mesh);
    const bar = document.getElementById("modes") as HTMLElement;
    for (const mode of mesh.modes) {
      const btn = document.createElement("button");
      btn.textContent = mode;
      btn.onclick = () => viewer.setMode(mode as Mode);
      bar.appendChild(btn);
    }
    const clearBtn = document.createElement("button");
    clearBtn.textContent = "clear grasps";
    clearBtn.onclick = () => viewer.clear();
    bar.appendChild(clearBtn);
  } catch (e) {
    status.textContent = `connection failed: ${e}`;
    status.style.color = "#e07070";
  }
}

main();
