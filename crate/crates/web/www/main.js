import init, { rnn_spectrum, depth_profile, DoubleMoonTrainer } from "./pkg/roa_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function axes(ctx, w, h) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(40, 10, w - 50, h - 30);
}

function drawSpectrum() {
  const s = JSON.parse(rnn_spectrum(num("sp-hidden"), num("sp-rho"), num("sp-len"), 1, $("sp-vanilla").checked));
  const c = $("sp-canvas");
  const ctx = c.getContext("2d");
  axes(ctx, c.width, c.height);
  const logs = s.singular_values.map((v) => Math.log10(Math.max(v, 1e-300)));
  const bounds = [Math.log10(s.lower), Math.log10(s.upper)].filter(Number.isFinite);
  const lo = Math.min(...logs, ...bounds) - 0.5;
  const hi = Math.max(...logs, ...bounds) + 0.5;
  const y = (v) => 10 + (c.height - 30) * (1 - (v - lo) / (hi - lo));
  const x = (i) => 50 + (c.width - 70) * (i / Math.max(1, logs.length - 1));
  ctx.fillStyle = "#333";
  ctx.fillText(hi.toFixed(1), 2, 18);
  ctx.fillText(lo.toFixed(1), 2, c.height - 22);
  for (const [b, col] of [[s.upper, "#c33"], [s.lower, s.lower_applicable ? "#c33" : "#ccc"]]) {
    ctx.strokeStyle = col;
    ctx.beginPath();
    ctx.moveTo(40, y(Math.log10(b)));
    ctx.lineTo(c.width - 10, y(Math.log10(b)));
    ctx.stroke();
  }
  ctx.fillStyle = "#1565c0";
  logs.forEach((v, i) => ctx.fillRect(x(i) - 2, y(v) - 2, 4, 4));
  $("sp-info").textContent =
    `alpha ${s.alpha.toExponential(3)}, sigma ${s.sigma.toFixed(2)}, ` +
    `singular values in [${s.singular_values.at(-1).toExponential(3)}, ${s.singular_values[0].toExponential(3)}], ` +
    `interval [${s.lower.toExponential(3)}, ${s.upper.toExponential(3)}]` +
    (s.lower_applicable ? "" : " (lower bound not applicable)");
}

function drawProfile() {
  const p = JSON.parse(depth_profile(num("dp-layers"), num("dp-rho"), 1));
  const c = $("dp-canvas");
  const ctx = c.getContext("2d");
  axes(ctx, c.width, c.height);
  const series = [[p.roa, "#c62828"], [p.vanilla, "#1565c0"]].map(([v, col]) => [v.map((n) => Math.log10(Math.max(n, 1e-300))), col]);
  const all = series.flatMap(([v]) => v);
  const lo = Math.min(...all);
  const hi = Math.max(...all, 0.5);
  const y = (v) => 10 + (c.height - 30) * (1 - (v - lo) / (hi - lo || 1));
  for (const [v, col] of series) {
    ctx.strokeStyle = col;
    ctx.beginPath();
    v.forEach((n, i) => {
      const px = 40 + (c.width - 50) * (i / Math.max(1, v.length - 1));
      i === 0 ? ctx.moveTo(px, y(n)) : ctx.lineTo(px, y(n));
    });
    ctx.stroke();
  }
  ctx.fillStyle = "#c62828";
  ctx.fillText("roa", c.width - 60, 25);
  ctx.fillStyle = "#1565c0";
  ctx.fillText("vanilla", c.width - 60, 40);
  ctx.fillStyle = "#333";
  ctx.fillText(hi.toFixed(0), 2, 18);
  ctx.fillText(lo.toFixed(0), 2, c.height - 22);
}

const region = [-20, 30, -15, 20];
let trainer = null;
let running = false;

function resetTrainer() {
  trainer?.free();
  trainer = new DoubleMoonTrainer(num("dm-layers"), num("dm-rho"), num("dm-lr"), 0);
  drawMoon();
}

function drawMoon() {
  const c = $("dm-canvas");
  const ctx = c.getContext("2d");
  const [nx, ny] = [100, 70];
  const grid = trainer.predict_grid(nx, ny, ...region);
  const cw = c.width / nx;
  const ch = c.height / ny;
  for (let r = 0; r < ny; r++) {
    for (let k = 0; k < nx; k++) {
      const v = Math.max(-1, Math.min(1, grid[r * nx + k]));
      const t = (v + 1) / 2;
      ctx.fillStyle = `rgb(${Math.round(255 * t)}, ${Math.round(200 - 60 * Math.abs(v))}, ${Math.round(255 * (1 - t))})`;
      ctx.fillRect(k * cw, r * ch, cw + 1, ch + 1);
    }
  }
  const pts = trainer.points();
  for (let i = 0; i < pts.length; i += 3) {
    const px = ((pts[i] - region[0]) / (region[1] - region[0])) * c.width;
    const py = (1 - (pts[i + 1] - region[2]) / (region[3] - region[2])) * c.height;
    ctx.fillStyle = pts[i + 2] > 0 ? "#000" : "#fff";
    ctx.fillRect(px - 1, py - 1, 2, 2);
  }
  $("dm-info").textContent = `epoch ${trainer.epoch()}, alpha ${trainer.alpha().toExponential(3)}, MSE ${trainer.mse().toFixed(4)}`;
}

function loop() {
  if (!running) return;
  const mse = trainer.step_epoch();
  drawMoon();
  if (!Number.isFinite(mse)) {
    running = false;
    $("dm-info").textContent += " (diverged)";
    return;
  }
  requestAnimationFrame(loop);
}

await init();
$("sp-run").onclick = drawSpectrum;
$("dp-run").onclick = drawProfile;
$("dm-reset").onclick = () => {
  running = false;
  resetTrainer();
};
$("dm-train").onclick = () => {
  running = !running;
  loop();
};
drawSpectrum();
drawProfile();
resetTrainer();
