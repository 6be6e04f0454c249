// Browser entry point: connect to the runner, render at the display rate,
// and stream keyboard steering while keys are held.

import { StreamClient } from "./client.js";
import { modeMessage } from "./protocol.js";
import { buildScene, drawScene } from "./render.js";
import { SteeringController } from "./steering.js";
import { ViewState } from "./view.js";

function start(): void {
  const canvas = document.getElementById("scene") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const status = document.getElementById("status")!;
  const params = new URLSearchParams(window.location.search);
  const url = params.get("ws") ?? "ws://127.0.0.1:8765";

  const view = new ViewState(canvas.width, canvas.height);
  const client = new StreamClient(url);
  client.connect();

  const steering = new SteeringController((payload) => client.send(payload));

  window.addEventListener("keydown", (event) => {
    if (event.repeat) return;
    if (event.key === "i") client.send(modeMessage("interactive"));
    else if (event.key === "o") client.send(modeMessage("scripted"));
    else if (event.key === "c") view.toggle("cubes");
    else if (event.key === "f") view.toggle("arrows");
    else if (event.key === "r") view.toggle("aoa");
    else if (event.key === "t") view.toggle("tracker");
    else if (event.key === "+") view.zoom(1.2);
    else if (event.key === "-") view.zoom(1 / 1.2);
    else steering.keyDown(event.key);
  });
  window.addEventListener("keyup", (event) => steering.keyUp(event.key));

  let dragging = false;
  canvas.addEventListener("mousedown", () => { dragging = true; });
  window.addEventListener("mouseup", () => { dragging = false; });
  canvas.addEventListener("mousemove", (event) => {
    if (dragging) view.pan(event.movementX, event.movementY);
  });
  canvas.addEventListener("wheel", (event) => {
    view.zoom(event.deltaY < 0 ? 1.1 : 1 / 1.1);
    event.preventDefault();
  });

  function frame(): void {
    const state = client.lastState;
    if (state !== null && dragging === false) {
      view.follow(state.robot.x, state.robot.y);
    }
    drawScene(ctx, buildScene(state, view, client.staleness()), canvas.width,
              canvas.height);
    status.textContent = client.connected
      ? `t=${state?.t.toFixed(1) ?? "-"} tracker=${state?.tracker.status ?? "-"} ` +
        `dropped=${client.droppedMessages}`
      : `reconnecting (backoff ${client.currentBackoffMs} ms)`;
    requestAnimationFrame(frame);
  }
  requestAnimationFrame(frame);
}

document.addEventListener("DOMContentLoaded", start);
