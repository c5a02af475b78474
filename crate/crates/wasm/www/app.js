import init, { sensitivityCurves, sweepHeatmap, twinExperiment } from "./pkg/fsm_placer_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);
const PAD = 40;

function report(id, text, error = false) {
  $(id).textContent = text;
  $(id).className = error ? "out err" : "out";
}

function lines(canvas, xs, series, marks = [], logY = false) {
  const g = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height;
  g.clearRect(0, 0, w, h);
  const tf = (y) => (logY ? Math.log10(Math.max(y, 1e-300)) : y);
  const all = series.flatMap((s) => s.ys.map(tf)).filter(Number.isFinite);
  let lo = Math.min(...all), hi = Math.max(...all);
  if (hi === lo) { hi += 1; lo -= 1; }
  const x0 = xs[0], x1 = xs[xs.length - 1];
  const px = (x) => PAD + ((x - x0) / (x1 - x0)) * (w - 2 * PAD);
  const py = (y) => h - PAD + ((lo - tf(y)) / (hi - lo)) * (h - 2 * PAD);
  g.strokeStyle = "#999";
  g.strokeRect(PAD, PAD, w - 2 * PAD, h - 2 * PAD);
  g.fillStyle = "#444";
  g.font = "11px sans-serif";
  g.fillText(x0.toPrecision(3), PAD, h - PAD + 14);
  g.fillText(x1.toPrecision(3), w - PAD - 20, h - PAD + 14);
  g.fillText((logY ? "1e" : "") + hi.toPrecision(3), 2, PAD + 4);
  g.fillText((logY ? "1e" : "") + lo.toPrecision(3), 2, h - PAD);
  series.forEach((s, k) => {
    g.strokeStyle = s.color;
    g.beginPath();
    s.ys.forEach((y, i) => (i ? g.lineTo(px(xs[i]), py(y)) : g.moveTo(px(xs[i]), py(y))));
    g.stroke();
    g.fillStyle = s.color;
    g.fillText(s.label, w - PAD - 120, PAD + 14 + 14 * k);
  });
  g.strokeStyle = "#c33";
  g.setLineDash([4, 4]);
  for (const m of marks) {
    g.beginPath();
    g.moveTo(px(m), PAD);
    g.lineTo(px(m), h - PAD);
    g.stroke();
  }
  g.setLineDash([]);
}

function colour(v) {
  const stops = [[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]];
  const s = Math.min(Math.max(v, 0), 1) * (stops.length - 1);
  const i = Math.min(Math.floor(s), stops.length - 2);
  const f = s - i;
  const c = stops[i].map((a, k) => Math.round(a + f * (stops[i + 1][k] - a)));
  return `rgb(${c[0]},${c[1]},${c[2]})`;
}

let sweep = null;

function drawHeatmap() {
  if (!sweep) return;
  const { grid, summary } = sweep;
  const field = $("field").value;
  const values = grid[field].map((v) => (v === null || v <= 0 ? NaN : Math.log10(v)));
  const finite = values.filter(Number.isFinite);
  const lo = Math.min(...finite), hi = Math.max(...finite);
  const canvas = $("heatmap");
  const g = canvas.getContext("2d");
  const n1 = grid.t1_axis.length, n2 = grid.t2_axis.length;
  const cw = canvas.width / n1, ch = canvas.height / n2;
  for (let i = 0; i < n1; i++) {
    for (let j = 0; j < n2; j++) {
      const v = values[i * n2 + j];
      g.fillStyle = Number.isFinite(v) ? colour((v - lo) / (hi - lo || 1)) : "#bbb";
      g.fillRect(i * cw, canvas.height - (j + 1) * ch, Math.ceil(cw), Math.ceil(ch));
    }
  }
  const [p1, p2] = summary.planned_times;
  const ti = grid.t1_axis.findIndex((t) => t >= p1 - 1e-12);
  const tj = grid.t2_axis.findIndex((t) => t >= p2 - 1e-12);
  g.strokeStyle = "#f33";
  g.lineWidth = 2;
  g.strokeRect(ti * cw - 3, canvas.height - (tj + 1) * ch - 3, cw + 6, ch + 6);
  g.lineWidth = 1;
  const name = field === "det_g" ? "detG" : field;
  const s = summary.fields[name];
  report(
    "sweep-out",
    `log10 ${name} in [${lo.toFixed(2)}, ${hi.toFixed(2)}], horizontal t1, vertical t2\n` +
      `planned (${p1}, ${p2}) outlined; ${summary.singular_cells} singular cells in grey\n` +
      `row t1=${p1}: argmin t2 = ${s.row_argmin_t2}; column t2=${p2}: argmin t1 = ${s.column_argmin_t1}`,
  );
}

function runCurves() {
  try {
    const c = JSON.parse(sensitivityCurves($("model").value, num("x0"), num("alpha")));
    lines($("curves"), c.t, [
      { ys: c.x, color: "#333", label: "x(t)" },
      { ys: c.u, color: "#1f77b4", label: "u = dx/dx0" },
      { ys: c.v, color: "#ff7f0e", label: "v = dx/dalpha" },
    ], c.planned);
    report("curves-out", `planned observation times: ${c.planned.join(", ")} (dashed)`);
  } catch (e) {
    report("curves-out", String(e), true);
  }
}

function runSweep() {
  try {
    const count = Math.max(2, Math.min(200, Math.round(num("count"))));
    sweep = JSON.parse(sweepHeatmap($("model").value, num("x0"), num("alpha"), count));
    drawHeatmap();
  } catch (e) {
    report("sweep-out", String(e), true);
  }
}

function runTwin() {
  report("twin-out", "running…");
  setTimeout(() => {
    try {
      const r = JSON.parse(
        twinExperiment($("twin-model").value, num("t1"), num("t2"), num("noise") / 100, Math.round(num("seed"))),
      );
      if (r.estimate.length > 2) {
        const xs = r.estimate.map((_, i) => i / r.estimate.length);
        lines($("twin"), xs, [
          { ys: r.truth, color: "#333", label: "truth" },
          { ys: r.guess, color: "#aaa", label: "background" },
          { ys: r.estimate, color: "#d62728", label: "analysis" },
        ]);
      } else {
        const its = r.cost_history.map((_, i) => i);
        lines($("twin"), its.length > 1 ? its : [0, 1], [
          { ys: r.cost_history.length > 1 ? r.cost_history : [r.cost_history[0], r.cost_history[0]], color: "#2ca02c", label: "cost J" },
        ], [], true);
      }
      const fmt = (v) => v.map((x) => x.toFixed(4)).join(", ");
      report(
        "twin-out",
        (r.estimate.length <= 2 ? `estimate (${fmt(r.estimate)}), truth (${fmt(r.truth)})\n` : "") +
          `relative error ${r.error.toExponential(3)} (background ${r.background_error.toFixed(3)}), ` +
          `${r.iterations} iterations, ${r.converged ? "converged" : "not converged"}`,
      );
    } catch (e) {
      report("twin-out", String(e), true);
    }
  }, 10);
}

$("heatmap").addEventListener("click", (ev) => {
  if (!sweep) return;
  const rect = ev.target.getBoundingClientRect();
  const n1 = sweep.grid.t1_axis.length, n2 = sweep.grid.t2_axis.length;
  const i = Math.floor(((ev.clientX - rect.left) / rect.width) * n1);
  const j = Math.floor(((rect.bottom - ev.clientY) / rect.height) * n2);
  $("t1").value = sweep.grid.t1_axis[Math.min(i, n1 - 1)];
  $("t2").value = sweep.grid.t2_axis[Math.min(j, n2 - 1)];
  $("twin-model").value = $("model").value;
});

await init();
$("curves-go").addEventListener("click", runCurves);
$("sweep-go").addEventListener("click", runSweep);
$("field").addEventListener("change", drawHeatmap);
$("twin-go").addEventListener("click", runTwin);
runCurves();
runSweep();
