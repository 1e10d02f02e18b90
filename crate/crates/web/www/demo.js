import init, { weightCurve, logSnrCurve, solveMinNorm, diffusePoints } from "./pkg/minsnr_web.js";

const $ = (id) => document.getElementById(id);
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const STEPS = 1000;

function report(id, fn) {
  try {
    $(id).textContent = "";
    fn();
  } catch (e) {
    $(id).textContent = String(e.message ?? e);
  }
}

function frame(ctx, w, h) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#ccc";
  ctx.strokeRect(0.5, 0.5, w - 1, h - 1);
}

function drawWeights() {
  const target = $("w-target").value;
  const schedule = $("w-schedule").value;
  const gamma = $("w-gamma").value;
  const curves = [
    ["const", "const"],
    ["snr", "snr"],
    [`min-snr:${gamma}`, `min-snr:${gamma}`],
    [`max-snr:${gamma}`, `max-snr:${gamma}`],
  ].map(([label, s]) => [label, Array.from(weightCurve(s, target, schedule, STEPS)).map(Math.log10)]);
  if ($("w-snr").checked) curves.push(["log10 SNR", Array.from(logSnrCurve(schedule, STEPS))]);

  const c = $("w-canvas"), ctx = c.getContext("2d");
  frame(ctx, c.width, c.height);
  const finite = curves.flatMap(([, ys]) => ys.filter(Number.isFinite));
  const lo = Math.max(Math.min(...finite), -8), hi = Math.min(Math.max(...finite), 8);
  const pad = 30;
  const x = (t) => pad + ((t - 1) / (STEPS - 1)) * (c.width - 2 * pad);
  const y = (v) => c.height - pad - ((Math.min(Math.max(v, lo), hi) - lo) / (hi - lo || 1)) * (c.height - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.fillText(`log10 weight, range [${lo.toFixed(1)}, ${hi.toFixed(1)}]`, pad, 16);
  ctx.fillText("t = 1", pad, c.height - 10);
  ctx.fillText(`t = ${STEPS}`, c.width - pad - 40, c.height - 10);
  curves.forEach(([, ys], k) => {
    ctx.strokeStyle = COLORS[k % COLORS.length];
    ctx.lineWidth = 2;
    ctx.beginPath();
    let pen = false;
    ys.forEach((v, i) => {
      if (!Number.isFinite(v)) { pen = false; return; }
      pen ? ctx.lineTo(x(i + 1), y(v)) : ctx.moveTo(x(i + 1), y(v));
      pen = true;
    });
    ctx.stroke();
  });
  $("w-legend").innerHTML = curves
    .map(([label], k) => `<span style="color:${COLORS[k % COLORS.length]}">&#9632; ${label}</span>`)
    .join(" &nbsp; ");
}

function arrow(ctx, cx, cy, scale, gx, gy, color, width) {
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.beginPath();
  ctx.moveTo(cx, cy);
  ctx.lineTo(cx + gx * scale, cy - gy * scale);
  ctx.stroke();
}

function solve() {
  const rows = $("m-grads").value.trim().split("\n").filter((l) => l.trim())
    .map((l) => l.split(",").map((v) => Number(v.trim())));
  const dim = rows[0]?.length ?? 0;
  if (rows.some((r) => r.length !== dim || r.some((v) => !Number.isFinite(v)))) {
    throw new Error("every line needs the same number of numeric entries");
  }
  const flat = new Float64Array(rows.flat());
  const res = JSON.parse(solveMinNorm(flat, rows.length, Number($("m-lambda").value), 0.1, Number($("m-iters").value)));
  const fmt = (v) => v.toFixed(4);
  $("m-out").innerHTML = `<table><tr><th>bin</th><th>Frank-Wolfe</th><th>UGD</th></tr>${res.frank_wolfe
    .map((w, k) => `<tr><td>${k}</td><td>${fmt(w)}</td><td>${fmt(res.ugd[k])}</td></tr>`).join("")}
    <tr><td>objective</td><td>${res.frank_wolfe_objective.toExponential(3)}</td><td>${res.ugd_objective.toExponential(3)}</td></tr></table>`;

  const c = $("m-canvas"), ctx = c.getContext("2d");
  frame(ctx, c.width, c.height);
  if (dim !== 2) {
    ctx.fillStyle = "#555";
    ctx.fillText("plot shown for 2-D gradients only", 20, 20);
    return;
  }
  const reach = Math.max(...rows.flat().map(Math.abs), 1e-12);
  const scale = (c.width / 2 - 20) / reach;
  rows.forEach(([gx, gy], k) => arrow(ctx, c.width / 2, c.height / 2, scale, gx, gy, COLORS[k % COLORS.length], 2));
  arrow(ctx, c.width / 2, c.height / 2, scale, res.descent[0], res.descent[1], "#000", 4);
  ctx.fillStyle = "#000";
  ctx.fillText("black: common descent direction", 10, c.height - 10);
}

function drawDiffusion() {
  const t = Number($("d-t").value);
  $("d-tval").textContent = t;
  const pts = diffusePoints($("d-data").value, 3000, t, "cosine", STEPS, 7);
  const c = $("d-canvas"), ctx = c.getContext("2d");
  frame(ctx, c.width, c.height);
  const scale = c.width / 8;
  ctx.fillStyle = "rgba(31,119,180,0.35)";
  for (let i = 0; i < pts.length; i += 2) {
    ctx.fillRect(c.width / 2 + pts[i] * scale, c.height / 2 - pts[i + 1] * scale, 2, 2);
  }
}

await init();
for (const id of ["w-target", "w-schedule", "w-gamma", "w-snr"]) $(id).addEventListener("input", () => report("w-err", drawWeights));
$("m-solve").addEventListener("click", () => report("m-err", solve));
for (const id of ["d-data", "d-t"]) $(id).addEventListener("input", () => report("d-err", drawDiffusion));
report("w-err", drawWeights);
report("m-err", solve);
report("d-err", drawDiffusion);
