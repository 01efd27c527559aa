import init, { fit_points, synthetic_profile, classification_trial } from "./pkg/joulemark_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const fmt = (v, d) => (v === null || v === undefined ? "n/a" : v.toFixed(d));

function show(target, result, render) {
  const r = JSON.parse(result);
  if (r.error) {
    $(target).innerHTML = `<p class="error">${r.error}</p>`;
    return null;
  }
  render(r);
  return r;
}

function profileTable(p, outliers) {
  const counts = { low: 0, medium: 0, high: 0 };
  for (const e of outliers.entries) if (e.tier in counts) counts[e.tier] += 1;
  const flagged = outliers.entries
    .filter((e) => e.tier !== "none")
    .map((e) => `<tr><td>${e.solution_id}</td><td>${e.tier}</td><td>${e.direction}</td><td>${fmt(e.residual, 4)}</td></tr>`)
    .join("");
  return `<table>
    <tr><th>slope a (J/ms)</th><td>${fmt(p.slope_a, 6)}</td></tr>
    <tr><th>&sigma;e (J)</th><td>${fmt(p.sigma_e, 4)}</td></tr>
    <tr><th>Spearman</th><td>${fmt(p.spearman, 4)}</td></tr>
    <tr><th>n</th><td>${p.n}</td></tr>
    <tr><th>outliers low / medium / high</th><td>${counts.low} / ${counts.medium} / ${counts.high}</td></tr>
  </table>
  ${flagged ? `<h4>Flagged</h4><table><tr><th>id</th><th>tier</th><th>side</th><th>residual</th></tr>${flagged}</table>` : ""}`;
}

function runFit() {
  $("fit-plot").innerHTML = "";
  show("fit-info", fit_points($("points").value, $("fit-mode").value), (r) => {
    $("fit-plot").innerHTML = r.svg;
    $("fit-info").innerHTML = profileTable(r.profile, r.outliers);
  });
}

function runSynthetic() {
  $("syn-plot").innerHTML = "";
  const res = synthetic_profile(num("syn-active"), num("syn-idle"), num("syn-noise"), num("syn-n"), num("syn-seed"), $("syn-idle-sub").checked);
  show("syn-info", res, (r) => {
    $("syn-plot").innerHTML = r.svg;
    const idle = r.idle_slope === null ? "" : `<p>Idle baseline: ${fmt(r.idle_slope, 6)} J/ms</p>`;
    $("syn-info").innerHTML = `<p>True slope: ${fmt(r.true_slope, 6)} J/ms</p>${idle}${profileTable(r.profile, r.outliers)}`;
  });
}

function runClassification() {
  const res = classification_trial(num("cls-problems"), num("cls-spread"), num("cls-noise"), num("cls-size"), num("cls-seed"));
  show("cls-info", res, (r) => {
    const t = r.table;
    const head = t.test_ids.map((id) => `<th>${id}<br>${fmt(r.test[id], 3)}</th>`).join("");
    const rows = t.train_ids
      .map((id, i) => {
        const cells = t.cells[i]
          .map((v, j) => {
            const test = t.test_ids[j];
            return `<td class="${test === id ? "hit" : ""}">${fmt(v, 2)}</td>`;
          })
          .join("");
        return `<tr><th>${id} ${fmt(r.train[id], 3)}</th>${cells}</tr>`;
      })
      .join("");
    const success = Object.entries(r.success)
      .sort((a, b) => Number(a[0]) - Number(b[0]))
      .map(([n, s]) => `<td>${n}: ${s}</td>`)
      .join("");
    $("cls-info").innerHTML = `<h4>Successes by candidate-set size n (of ${t.test_ids.length})</h4>
      <table><tr>${success}</tr></table>
      <h4>Relative difference (%) of training rows vs test columns; true pairs shaded</h4>
      <table><tr><th></th>${head}</tr>${rows}</table>`;
  });
}

await init();
$("fit-run").onclick = runFit;
$("syn-run").onclick = runSynthetic;
$("cls-run").onclick = runClassification;
runFit();
runSynthetic();
runClassification();
