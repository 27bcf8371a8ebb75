import init, { basis_curves, simulate, category_probabilities } from "./pkg/fdclass_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const $ = (id) => document.getElementById(id);

function plotLines(canvas, xs, rows, colorOf) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  let lo = Infinity, hi = -Infinity;
  for (const r of rows) for (const v of r) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  if (hi === lo) { hi += 1; lo -= 1; }
  const pad = 10;
  const px = (x) => pad + (x - xs[0]) / (xs[xs.length - 1] - xs[0]) * (w - 2 * pad);
  const py = (y) => h - pad - (y - lo) / (hi - lo) * (h - 2 * pad);
  rows.forEach((r, i) => {
    ctx.strokeStyle = colorOf(i);
    ctx.beginPath();
    r.forEach((v, t) => (t ? ctx.lineTo(px(xs[t]), py(v)) : ctx.moveTo(px(xs[t]), py(v))));
    ctx.stroke();
  });
}

function chunk(flat, n) {
  const rows = [];
  for (let i = 0; i < flat.length; i += n) rows.push(flat.slice(i, i + n));
  return rows;
}

function report(e) {
  $("status").textContent = e ? String(e.message ?? e) : "";
  $("status").className = e ? "err" : "";
}

function drawBasis() {
  try {
    const j = Number($("nbasis").value);
    const intervals = 200;
    const xs = Array.from({ length: intervals + 1 }, (_, i) => i / intervals);
    plotLines($("basis"), xs, chunk(basis_curves(j, intervals), intervals + 1), (i) => COLORS[i % COLORS.length]);
    report();
  } catch (e) { report(e); }
}

function drawCurves() {
  try {
    const sim = simulate($("kind").value, Number($("nper").value), Number($("seed").value),
      Number($("variance").value), Number($("decay").value));
    const grid = sim.grid, labels = sim.labels;
    plotLines($("curves"), grid, chunk(sim.values, grid.length), (i) => COLORS[labels[i] - 1]);
    $("legend").innerHTML = [1, 2, 3]
      .map((k) => `<span style="color:${COLORS[k - 1]}">■ class ${k}</span>`).join(" &nbsp; ");
    sim.free();
    report();
  } catch (e) { report(e); }
}

function drawProbs() {
  try {
    const model = $("model").value;
    const eta = [Number($("eta1").value), Number($("eta2").value)];
    const g2 = Number($("gamma2").value);
    $("eta2").disabled = model === "omp";
    $("gamma2").disabled = model !== "omp";
    const p = category_probabilities(model, model === "omp" ? eta.slice(0, 1) : eta, g2);
    $("probs").innerHTML = Array.from(p).map((v, k) => `<span>P(class ${k + 1}) = ${v.toFixed(4)}</span>`).join("");
    const canvas = $("bars"), ctx = canvas.getContext("2d");
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    let x = 0;
    p.forEach((v, k) => {
      ctx.fillStyle = COLORS[k];
      ctx.fillRect(x, 20, v * canvas.width, canvas.height - 40);
      x += v * canvas.width;
    });
    report();
  } catch (e) { report(e); }
}

await init();
for (const id of ["nbasis"]) $(id).addEventListener("input", drawBasis);
for (const id of ["kind", "nper", "seed", "variance", "decay"]) $(id).addEventListener("change", drawCurves);
for (const id of ["model", "eta1", "eta2", "gamma2"]) $(id).addEventListener("input", drawProbs);
drawBasis();
drawCurves();
drawProbs();
