import { ApiError, SessionApi } from "./api.js";
import { NEGATIVE_STROKE_COLOR, POSITIVE_STROKE_COLOR, objectColor } from "./palette.js";
import { StrokeBuffer } from "./strokes.js";
import { Viewport, clampFrame, initialViewState } from "./view.js";

const api = new SessionApi("");
const state = initialViewState();
const buffer = new StrokeBuffer();
const viewport = new Viewport();

let objectCount = 1;
let annotatedFrames: number[] = [];
let frameImage: HTMLImageElement | null = null;
let overlayImage: HTMLImageElement | null = null;
let playTimer: number | null = null;
let submitting = false;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const canvas = $<HTMLCanvasElement>("canvas");
const ctx = canvas.getContext("2d")!;
const status = $<HTMLDivElement>("status");
const frameSlider = $<HTMLInputElement>("frame");
const frameLabel = $<HTMLSpanElement>("frame-label");
const opacitySlider = $<HTMLInputElement>("opacity");
const objectSelect = $<HTMLSelectElement>("object");
const metricsBox = $<HTMLDivElement>("metrics");

function setStatus(text: string, kind: "info" | "error" | "busy" = "info"): void {
  status.textContent = text;
  status.className = `status ${kind}`;
}

function currentPolarity(): "positive" | "negative" {
  return ($<HTMLInputElement>("polarity-negative")).checked ? "negative" : "positive";
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error(`failed to load ${url}`));
    img.src = url;
  });
}

async function refreshImages(): Promise<void> {
  if (!state.sessionId) return;
  const frameUrl = api.frameUrl(state.sessionId, state.frame);
  frameImage = await loadImage(frameUrl);
  viewport.setImage(frameImage.naturalWidth, frameImage.naturalHeight);
  if (state.round > 0 && state.opacity > 0) {
    overlayImage = await loadImage(
      api.overlayUrl(state.sessionId, state.round, state.frame, state.opacity),
    );
  } else {
    overlayImage = null;
  }
  draw();
}

function draw(): void {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!frameImage) return;
  const shown = overlayImage ?? frameImage;
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(
    shown,
    viewport.offsetX,
    viewport.offsetY,
    viewport.imageWidth * viewport.scale,
    viewport.imageHeight * viewport.scale,
  );
  for (const stroke of buffer.strokes) {
    ctx.strokeStyle = stroke.polarity === "positive" ? POSITIVE_STROKE_COLOR : NEGATIVE_STROKE_COLOR;
    ctx.fillStyle = ctx.strokeStyle;
    ctx.lineWidth = Math.max(2, viewport.scale);
    ctx.lineCap = "round";
    const pts = stroke.points.map(([x, y]) => viewport.imageToDisplay(x, y));
    if (pts.length === 1) {
      ctx.beginPath();
      ctx.arc(pts[0][0], pts[0][1], ctx.lineWidth / 2, 0, Math.PI * 2);
      ctx.fill();
      continue;
    }
    ctx.beginPath();
    ctx.moveTo(pts[0][0], pts[0][1]);
    for (const [x, y] of pts.slice(1)) ctx.lineTo(x, y);
    ctx.stroke();
  }
  const mark = annotatedFrames.includes(state.frame) ? " (annotated)" : "";
  frameLabel.textContent = `frame ${state.frame + 1}/${state.frameCount}${mark}`;
}

// ---------------------------------------------------------------------------
// stroke input
// ---------------------------------------------------------------------------

function canvasPoint(ev: PointerEvent): [number, number] | null {
  const rect = canvas.getBoundingClientRect();
  const x = ((ev.clientX - rect.left) / rect.width) * canvas.width;
  const y = ((ev.clientY - rect.top) / rect.height) * canvas.height;
  return viewport.displayToImage(x, y);
}

let drawing = false;

canvas.addEventListener("pointerdown", (ev) => {
  if (!state.sessionId || submitting) return;
  const pt = canvasPoint(ev);
  if (!pt) return;
  drawing = true;
  canvas.setPointerCapture(ev.pointerId);
  buffer.beginStroke(state.objectId, currentPolarity(), pt);
  draw();
});

canvas.addEventListener("pointermove", (ev) => {
  if (!drawing) return;
  const pt = canvasPoint(ev);
  if (pt) {
    buffer.extend(pt);
    draw();
  }
});

const finishStroke = () => {
  if (!drawing) return;
  drawing = false;
  buffer.endStroke();
  draw();
};
canvas.addEventListener("pointerup", finishStroke);
canvas.addEventListener("pointercancel", finishStroke);

// ---------------------------------------------------------------------------
// controls
// ---------------------------------------------------------------------------

async function setFrame(frame: number): Promise<void> {
  state.frame = clampFrame(state, frame);
  frameSlider.value = String(state.frame);
  await refreshImages();
}

$<HTMLButtonElement>("create").addEventListener("click", async () => {
  const path = $<HTMLInputElement>("sequence-path").value.trim();
  if (!path) {
    setStatus("enter a sequence directory path first", "error");
    return;
  }
  try {
    setStatus("creating session…", "busy");
    const info = await api.createSession(path);
    state.sessionId = info.session_id;
    state.frameCount = info.frame_count;
    state.round = 0;
    objectCount = info.object_count;
    annotatedFrames = [];
    buffer.clear();
    frameSlider.max = String(info.frame_count - 1);
    objectSelect.innerHTML = "";
    for (let k = 1; k <= objectCount; k++) {
      const opt = document.createElement("option");
      opt.value = String(k);
      opt.textContent = `object ${k}`;
      opt.style.color = objectColor(k);
      objectSelect.appendChild(opt);
    }
    state.objectId = 1;
    await setFrame(0);
    setStatus(`session ${info.session_id} on ${info.sequence_id}: draw a positive scribble and submit`);
  } catch (err) {
    setStatus(err instanceof ApiError ? err.detail : String(err), "error");
  }
});

frameSlider.addEventListener("input", () => void setFrame(Number(frameSlider.value)));
$<HTMLButtonElement>("prev").addEventListener("click", () => void setFrame(state.frame - 1));
$<HTMLButtonElement>("next").addEventListener("click", () => void setFrame(state.frame + 1));

$<HTMLButtonElement>("play").addEventListener("click", () => {
  if (playTimer !== null) {
    window.clearInterval(playTimer);
    playTimer = null;
    $<HTMLButtonElement>("play").textContent = "play";
    return;
  }
  $<HTMLButtonElement>("play").textContent = "pause";
  playTimer = window.setInterval(() => {
    void setFrame((state.frame + 1) % state.frameCount);
  }, 180);
});

opacitySlider.addEventListener("input", () => {
  state.opacity = Number(opacitySlider.value) / 100;
  void refreshImages();
});

objectSelect.addEventListener("change", () => {
  state.objectId = Number(objectSelect.value);
});

$<HTMLButtonElement>("undo").addEventListener("click", () => {
  buffer.undo();
  draw();
});

$<HTMLButtonElement>("clear").addEventListener("click", () => {
  buffer.clear();
  draw();
});

$<HTMLButtonElement>("suggest").addEventListener("click", async () => {
  if (!state.sessionId) return;
  try {
    const s = await api.suggest(state.sessionId);
    if (s.complete || s.frame === null) {
      setStatus("all frames annotated; protocol complete");
      return;
    }
    await setFrame(s.frame);
    setStatus(`suggested frame ${s.frame + 1} (${s.basis})`);
  } catch (err) {
    setStatus(err instanceof ApiError ? err.detail : String(err), "error");
  }
});

$<HTMLButtonElement>("submit").addEventListener("click", async () => {
  if (!state.sessionId || submitting) return;
  const firstAnnotation = !annotatedFrames.includes(state.frame);
  if (firstAnnotation && !buffer.hasPositive()) {
    setStatus("a first annotation needs at least one positive stroke", "error");
    return;
  }
  if (buffer.isEmpty) {
    setStatus("draw at least one stroke before submitting", "error");
    return;
  }
  submitting = true;
  setStatus(`running round ${state.round + 1}…`, "busy");
  try {
    const summary = await api.submitScribbles(state.sessionId, buffer.toDocument(state.frame));
    annotatedFrames.push(summary.annotated_frame);
    state.round = summary.round;
    buffer.clear();
    await refreshImages();
    const hint =
      summary.suggested_next !== null ? `; suggested next: frame ${summary.suggested_next + 1}` : "";
    setStatus(`round ${summary.round} complete${hint}`);
    await refreshMetrics();
  } catch (err) {
    // conflict and validation errors keep the stroke buffer intact
    if (err instanceof ApiError && err.isConflict) {
      setStatus("a round is already running; strokes kept, try again shortly", "error");
    } else if (err instanceof ApiError && err.isValidation) {
      setStatus(`rejected: ${err.detail} (strokes kept)`, "error");
    } else {
      setStatus(err instanceof ApiError ? err.detail : String(err), "error");
    }
    draw();
  } finally {
    submitting = false;
  }
});

async function refreshMetrics(): Promise<void> {
  if (!state.sessionId) return;
  try {
    const m = await api.metrics(state.sessionId);
    const rows = m.j
      .map((j, i) => `round ${i + 1}: J ${j.toFixed(3)}  F ${m.f[i].toFixed(3)}`)
      .join("\n");
    metricsBox.textContent = `${rows}\nAUC-J ${m.auc_j.toFixed(3)}  AUC-F ${m.auc_f.toFixed(3)}`;
  } catch {
    metricsBox.textContent = "(no ground truth: metrics unavailable)";
  }
}

setStatus("enter a sequence path and create a session");
draw();
