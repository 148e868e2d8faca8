import init, { truth_flow, detect, pair_scores } from "./pkg/commflow_wasm_demo.js";

const $ = (id) => document.getElementById(id);
const fmt = (x) => (x === null ? "n/a" : x.toFixed(3));

function guard(f) {
  return () => {
    try {
      f();
    } catch (e) {
      $("status").textContent = String(e.message ?? e);
    }
  };
}

function renderScores(segments) {
  const head = "<tr><th>segment</th><th>truth blocks</th><th>smoothed blocks</th>" +
    "<th>baseline P/R</th><th>ensemble P/R</th><th>smoothed P/R</th></tr>";
  const rows = segments.map((s) =>
    `<tr><td>${s.segment}</td><td>${s.truth_blocks}</td><td>${s.smoothed_blocks}</td>` +
    [s.baseline, s.ensemble, s.smoothed].map(([p, r]) => `<td>${fmt(p)} / ${fmt(r)}</td>`).join("") +
    "</tr>");
  $("scores").innerHTML = head + rows.join("");
}

await init();

$("truth").onclick = guard(() => {
  $("dot").textContent = truth_flow($("params").value);
});

$("detect").onclick = () => {
  $("status").textContent = "running...";
  // Let the status text paint before the blocking call.
  setTimeout(guard(() => {
    const params = $("params").value.trim();
    const request = {
      edges_per_segment: Number($("edges").value),
      ensemble_size: Number($("ensemble").value),
      sweeps: Number($("sweeps").value),
      seed: Number($("seed").value),
    };
    if (params) request.params = JSON.parse(params);
    const t0 = performance.now();
    const report = JSON.parse(detect(JSON.stringify(request)));
    renderScores(report.segments);
    $("dot").textContent = report.flow_dot;
    $("status").textContent = `done in ${((performance.now() - t0) / 1000).toFixed(1)}s`;
  }), 0);
};

$("compare").onclick = guard(() => {
  $("pairs").textContent = JSON.stringify(JSON.parse(pair_scores($("pred").value, $("gold").value)), null, 2);
});
