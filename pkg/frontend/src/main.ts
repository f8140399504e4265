// Page bootstrap: wires the controls to the session controller and runs the
// animation loop. All domain logic lives in model.ts.

import { ApiClient, ApiError } from "./api.js";
import { SessionController } from "./model.js";
import { renderScene, renderStopChart } from "./render.js";

const api = new ApiClient("");
const controller = new SessionController(api);

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const sceneCanvas = $<HTMLCanvasElement>("scene");
const chartCanvas = $<HTMLCanvasElement>("chart");
const statusEl = $<HTMLDivElement>("status");
const errorEl = $<HTMLDivElement>("error");
const questionPanel = $<HTMLDivElement>("question-panel");
const questionText = $<HTMLDivElement>("question-text");
const answerA = $<HTMLButtonElement>("answer-a");
const answerB = $<HTMLButtonElement>("answer-b");
const responseBubble = $<HTMLDivElement>("response-bubble");
const autoStopBadge = $<HTMLDivElement>("auto-stop-badge");
const maeReadout = $<HTMLDivElement>("mae-readout");
const stopBtn = $<HTMLButtonElement>("stop-btn");
const nextBtn = $<HTMLButtonElement>("next-btn");
const fineTuneBtn = $<HTMLButtonElement>("finetune-btn");
const exportBtn = $<HTMLButtonElement>("export-btn");
const heatmapToggle = $<HTMLInputElement>("heatmap-toggle");
const speedInput = $<HTMLInputElement>("speed-multiplier");

let speedMultiplier = 1.0;
let lastFrame = performance.now();

function setStatus(text: string): void {
  statusEl.textContent = text;
}

function showError(text: string | null): void {
  errorEl.textContent = text ?? "";
  errorEl.style.display = text ? "block" : "none";
}

function refreshControls(): void {
  const phase = controller.state.phase;
  const hasSession = controller.state.sessionId !== null;
  nextBtn.disabled = !hasSession || phase !== "idle";
  stopBtn.disabled = phase !== "approaching";
  fineTuneBtn.disabled = !hasSession || controller.state.history.length === 0
    || phase !== "idle";
  exportBtn.disabled = !hasSession;
  questionPanel.style.display = phase === "question" || phase === "submitting"
    ? "block" : "none";
  const approach = controller.state.approach;
  if (approach) {
    questionText.textContent = `${approach.dialogue.object}: ${approach.dialogue.question}`;
    answerA.textContent = approach.dialogue.answers[0];
    answerB.textContent = approach.dialogue.answers[1];
    autoStopBadge.style.display = approach.autoStopped ? "inline-block" : "none";
  }
}

async function withErrors<T>(op: () => Promise<T>): Promise<T | undefined> {
  try {
    showError(null);
    return await op();
  } catch (err) {
    showError(err instanceof ApiError
      ? `service error ${err.status}: ${err.message} (state preserved, retry)`
      : String(err));
    return undefined;
  } finally {
    refreshControls();
  }
}

$<HTMLButtonElement>("start-btn").addEventListener("click", () => {
  void withErrors(async () => {
    const strategy = $<HTMLSelectElement>("strategy").value as "atl" | "random";
    const seed = parseInt($<HTMLInputElement>("seed").value, 10) || 0;
    const room = { vertices: [[0, 0], [6, 0], [6, 5], [0, 5]] as [number, number][] };
    const pose = { x: 3.0, y: 2.5, heading: 0.0 };
    const sid = await controller.start(room, pose, strategy, seed);
    setStatus(`session ${sid} (${strategy})`);
    await controller.refreshHeatmap(64);
  });
});

nextBtn.addEventListener("click", () => {
  void withErrors(async () => {
    const approach = await controller.nextApproach();
    responseBubble.textContent = "";
    setStatus(`approach ${approach.approachId}: angle ${(approach.angle * 180 / Math.PI).toFixed(0)}°, carrying ${approach.dialogue.object}`);
  });
});

stopBtn.addEventListener("click", () => {
  if (controller.state.phase !== "approaching") return;
  const distance = controller.pressStop();
  setStatus(`stopped at ${distance.toFixed(3)} m`);
  refreshControls();
});

function answerHandler(index: 0 | 1): void {
  void withErrors(async () => {
    const completed = await controller.answer(index);
    responseBubble.textContent = completed.response;
    setStatus(`robot stopped at ${completed.stopDistance.toFixed(3)} m `
      + `(${controller.state.history.length} approaches recorded)`);
    renderStopChart(chartCanvas, controller.stopsByAngle());
  });
}

answerA.addEventListener("click", () => answerHandler(0));
answerB.addEventListener("click", () => answerHandler(1));

fineTuneBtn.addEventListener("click", () => {
  void withErrors(async () => {
    setStatus("fine-tuning…");
    const result = await controller.fineTune();
    maeReadout.textContent =
      `MAE before ${result.pre_mae.toFixed(2)} → after ${result.post_mae.toFixed(2)}`;
    await controller.refreshHeatmap(64);
    setStatus("fine-tuned; heatmap refreshed");
  });
});

exportBtn.addEventListener("click", () => {
  void withErrors(async () => {
    const doc = await controller.exportSession();
    const blob = new Blob([JSON.stringify(doc, null, 2)], { type: "application/json" });
    const link = document.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = `session-${doc.session_id}.json`;
    link.click();
    URL.revokeObjectURL(link.href);
  });
});

speedInput.addEventListener("input", () => {
  speedMultiplier = parseFloat(speedInput.value) || 1.0;
  $<HTMLSpanElement>("speed-label").textContent = `${speedMultiplier.toFixed(1)}×`;
});

function frame(now: number): void {
  const dt = Math.min((now - lastFrame) / 1000, 0.1);
  lastFrame = now;
  const wasApproaching = controller.state.phase === "approaching";
  controller.tick(dt * speedMultiplier);
  if (wasApproaching && controller.state.phase === "question") {
    setStatus("auto-stopped at the minimum distance");
    refreshControls();
  }
  renderScene(sceneCanvas, controller.state, heatmapToggle.checked);
  requestAnimationFrame(frame);
}

refreshControls();
requestAnimationFrame(frame);
