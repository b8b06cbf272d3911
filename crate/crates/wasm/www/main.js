import init, {
  probabilityCurve,
  decisionMargin,
  classifyLogits,
  focalCurve,
  parseVerdict,
} from "./pkg/subjscan_wasm.js";

const $ = (id) => document.getElementById(id);
const MARGIN = 8;
const STEPS = 241;

function plot(canvas, xs, series, yMax, marks = []) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 36;
  const sx = (x) => pad + ((x - xs[0]) / (xs[xs.length - 1] - xs[0])) * (w - 2 * pad);
  const sy = (y) => h - pad - (Math.min(y, yMax) / yMax) * (h - 2 * pad);
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.font = "12px sans-serif";
  ctx.fillText(xs[0].toFixed(2), pad, h - pad + 16);
  ctx.fillText(xs[xs.length - 1].toFixed(2), w - pad - 24, h - pad + 16);
  ctx.fillText(yMax.toFixed(2), 2, pad + 4);
  for (const m of marks) {
    ctx.strokeStyle = m.color;
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    if (m.x !== undefined) {
      ctx.moveTo(sx(m.x), pad);
      ctx.lineTo(sx(m.x), h - pad);
    } else {
      ctx.moveTo(pad, sy(m.y));
      ctx.lineTo(w - pad, sy(m.y));
    }
    ctx.stroke();
    ctx.setLineDash([]);
  }
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    s.ys.forEach((y, i) => (i ? ctx.lineTo(sx(xs[i]), sy(y)) : ctx.moveTo(sx(xs[i]), sy(y))));
    ctx.stroke();
    ctx.lineWidth = 1;
  }
}

const grid = (lo, hi, n) => Array.from({ length: n }, (_, i) => lo + ((hi - lo) * i) / (n - 1));

function updateCalibration() {
  const t = Math.exp(parseFloat($("temp").value));
  const thr = parseFloat($("thr").value);
  $("temp-v").textContent = t.toFixed(3);
  $("thr-v").textContent = thr.toFixed(2);
  const xs = grid(-MARGIN, MARGIN, STEPS);
  const scaled = probabilityCurve(t, -MARGIN, MARGIN, STEPS);
  const raw = probabilityCurve(1, -MARGIN, MARGIN, STEPS);
  const cut = decisionMargin(t, thr);
  plot($("calib"), xs, [
    { ys: Array.from(raw), color: "#bbb" },
    { ys: Array.from(scaled), color: "#1f5fbf" },
  ], 1, [
    { y: thr, color: "#c33" },
    { x: Math.max(-MARGIN, Math.min(MARGIN, cut)), color: "#c33" },
  ]);
  try {
    const r = JSON.parse(classifyLogits(
      parseFloat($("zobj").value), parseFloat($("zsubj").value), t, thr));
    $("decision").textContent =
      `p_subj ${r.p_subj.toFixed(4)} -> ${r.label} (argmax ${r.argmax}); SUBJ once margin >= ${cut.toFixed(3)}`;
  } catch (e) {
    $("decision").textContent = String(e);
  }
}

function updateFocal() {
  const gamma = parseFloat($("gamma").value);
  const weight = parseFloat($("weight").value);
  $("gamma-v").textContent = gamma.toFixed(1);
  $("weight-v").textContent = weight.toFixed(2);
  const xs = grid(0.01, 1, 200);
  const ce = Array.from(focalCurve(0, weight, 200));
  const focal = Array.from(focalCurve(gamma, weight, 200));
  plot($("focal"), xs, [
    { ys: ce, color: "#bbb" },
    { ys: focal, color: "#1f8f4f" },
  ], Math.max(1, Math.min(ce[0], 5)));
}

function updateVerdict() {
  $("parsed").textContent = JSON.stringify(JSON.parse(parseVerdict($("raw").value)), null, 2);
}

await init();
for (const id of ["temp", "thr", "zobj", "zsubj"]) $(id).addEventListener("input", updateCalibration);
for (const id of ["gamma", "weight"]) $(id).addEventListener("input", updateFocal);
$("raw").addEventListener("input", updateVerdict);
updateCalibration();
updateFocal();
updateVerdict();
