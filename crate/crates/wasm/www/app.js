import init, { powerCurve, nullSummary, singleTest } from "./pkg/encompass_wasm.js";

const num = (form, name) => Number(form.elements[name].value);

function table(rows) {
  const body = rows.map(([k, v]) => `<tr><td>${k}</td><td>${v}</td></tr>`).join("");
  return `<table>${body}</table>`;
}

function showError(el, err) {
  el.innerHTML = `<p class="error">${String(err.message ?? err)}</p>`;
}

// Axis-box plot of one or more series: [{x, y, color, bars}] on shared scales.
function plot(canvas, series, xRange, yRange, xLabel) {
  const ctx = canvas.getContext("2d");
  const { width, height } = canvas;
  const pad = 36;
  ctx.clearRect(0, 0, width, height);
  const sx = (x) => pad + ((x - xRange[0]) / (xRange[1] - xRange[0])) * (width - 2 * pad);
  const sy = (y) => height - pad - ((y - yRange[0]) / (yRange[1] - yRange[0])) * (height - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, width - 2 * pad, height - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.font = "12px system-ui";
  ctx.fillText(xRange[0].toFixed(2), pad, height - pad + 14);
  ctx.fillText(xRange[1].toFixed(2), width - pad - 24, height - pad + 14);
  ctx.fillText(yRange[1].toFixed(2), 2, pad + 4);
  ctx.fillText(yRange[0].toFixed(2), 2, height - pad);
  ctx.fillText(xLabel, width / 2, height - 6);
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.fillStyle = s.color;
    if (s.bars) {
      for (let i = 0; i < s.y.length; i++) {
        const x0 = sx(s.x[i]);
        const x1 = sx(s.x[i + 1]);
        ctx.fillRect(x0, sy(s.y[i]), x1 - x0 - 1, sy(yRange[0]) - sy(s.y[i]));
      }
    } else {
      ctx.beginPath();
      s.y.forEach((y, i) => (i ? ctx.lineTo(sx(s.x[i]), sy(y)) : ctx.moveTo(sx(s.x[i]), sy(y))));
      ctx.lineWidth = 2;
      ctx.stroke();
    }
  }
}

function drawPower() {
  const f = document.getElementById("power-form");
  const out = document.getElementById("power-out");
  try {
    const r = JSON.parse(powerCurve(num(f, "c"), num(f, "q11"), num(f, "q12"), num(f, "q22"),
      num(f, "phi2"), num(f, "pi0"), num(f, "level"), 77));
    plot(document.getElementById("power-canvas"),
      [{ x: r.mu0, y: r.power, color: "#1f5fa8" }], [0.1, 0.48], [0, 1], "mu0");
    const pick = [0, 38, 57, 66, 76];
    out.innerHTML = table([["mu0", "drift / power"],
      ...pick.map((i) => [r.mu0[i].toFixed(3), `${r.drift[i].toFixed(4)} / ${r.power[i].toFixed(4)}`])]);
  } catch (e) {
    showError(out, e);
  }
}

function drawNull() {
  const f = document.getElementById("null-form");
  const out = document.getElementById("null-out");
  out.textContent = "simulating…";
  setTimeout(() => {
    try {
      const r = JSON.parse(nullSummary(num(f, "t"), num(f, "h"), num(f, "rho"), num(f, "mu0"),
        num(f, "reps"), num(f, "seed"), 32));
      const mids = r.bin_edges.slice(0, -1).map((e, i) => (e + r.bin_edges[i + 1]) / 2);
      const top = Math.max(...r.density, ...r.normal_density) * 1.1;
      plot(document.getElementById("null-canvas"), [
        { x: r.bin_edges, y: r.density, color: "#9bb7d9", bars: true },
        { x: mids, y: r.normal_density, color: "#b3461f" },
      ], [-4, 4], [0, top], "statistic");
      out.innerHTML = table([
        ["statistics", r.statistics],
        ["failed replications", r.failures],
        ["rejection rate at 10%", r.rejection_rate.toFixed(4)],
        ["Kolmogorov-Smirnov distance", r.ks_distance.toFixed(4)],
      ]);
    } catch (e) {
      showError(out, e);
    }
  }, 10);
}

function runSingle() {
  const f = document.getElementById("single-form");
  const out = document.getElementById("single-out");
  try {
    const r = JSON.parse(singleTest(num(f, "t"), num(f, "h"), num(f, "rho"), num(f, "beta2"),
      num(f, "mu0"), num(f, "seed")));
    out.innerHTML = table([
      ["statistic", r.statistic.toFixed(4)],
      ["p-value", r.p_value.toFixed(4)],
      ["mean moment", r.dbar.toExponential(4)],
      ["long-run variance", r.omega2.toExponential(4)],
      ["MSE benchmark", r.mse1.toFixed(4)],
      ["MSE larger model", r.mse2.toFixed(4)],
      ["forecasts n / split m0", `${r.n} / ${r.m0}`],
      ["bandwidth", r.bandwidth],
    ]);
  } catch (e) {
    showError(out, e);
  }
}

const on = (id, fn) => document.getElementById(id).addEventListener("submit", (e) => {
  e.preventDefault();
  fn();
});

await init();
on("power-form", drawPower);
on("null-form", drawNull);
on("single-form", runSingle);
drawPower();
runSingle();
