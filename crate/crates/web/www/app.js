import init, { density_profile, factor_identity, kashin_draw } from "./pkg/densfact_web.js";

const $ = (id) => document.getElementById(id);
const fmt = (x) => (typeof x === "number" ? (Math.abs(x) >= 1e4 || (x !== 0 && Math.abs(x) < 1e-3) ? x.toExponential(4) : x.toFixed(6)) : String(x));

function operator() {
  const matrix = $("matrix").value.trim().split("\n").map((r) => r.trim().split(/[\s,]+/).map(Number));
  const w = $("weights").value.trim();
  const weights = w === "uniform" ? matrix.map(() => 1 / matrix.length) : w.split(/[\s,]+/).map(Number);
  return { matrix, weights, domain: $("domain").value };
}

function show(el, json, render) {
  const r = JSON.parse(json);
  el.innerHTML = "";
  if (r.error) {
    el.innerHTML = `<p class="err">${r.error}</p>`;
    return;
  }
  el.appendChild(render(r.ok));
}

function table(head, rows) {
  const t = document.createElement("table");
  t.innerHTML = `<tr>${head.map((h) => `<th>${h}</th>`).join("")}</tr>` +
    rows.map((r) => `<tr>${r.map((c) => `<td>${fmt(c)}</td>`).join("")}</tr>`).join("");
  return t;
}

function pre(obj) {
  const p = document.createElement("pre");
  p.textContent = obj;
  return p;
}

await init();

$("profile").onclick = () => {
  const qs = $("qs").value.split(/[\s,]+/).filter(Boolean).map(Number);
  show($("profile-out"), density_profile(JSON.stringify({ ...operator(), qs })), (ok) => {
    const div = document.createElement("div");
    div.appendChild(pre(`‖T‖ = ${fmt(ok.norm)}    C(1,∞) = ∫ sup |Tz| dμ = ${fmt(ok.c1inf)}`));
    div.appendChild(table(["q", "lower", "upper", "converged", "max density"],
      ok.brackets.map((b) => [b.q, b.lower, b.upper, b.converged, Math.max(...b.density)])));
    return div;
  });
};

$("factor").onclick = () => {
  const qv = $("q").value.trim();
  const q = qv === "inf" || qv === "∞" ? null : Number(qv);
  show($("factor-out"), factor_identity(JSON.stringify({ ...operator(), p: Number($("p").value), q })), (ok) => {
    const div = document.createElement("div");
    div.appendChild(table(["k", "pairs", "‖A‖‖B‖", "guaranteed γ", "guaranteed k", "residual", "δ"],
      [[ok.k, ok.m, ok.gamma, ok.guaranteed_gamma, ok.guaranteed_k, ok.residual, ok.delta]]));
    div.appendChild(pre(`sets F_i: ${JSON.stringify(ok.sets)}\nA (domain × k):\n${ok.a.map((r) => r.map(fmt).join("  ")).join("\n")}`));
    return div;
  });
};

$("kashin").onclick = () => {
  const json = kashin_draw(Number($("kn").value), BigInt($("kseed").value), Number($("kr").value), Number($("kgl").value));
  show($("kashin-out"), json, (ok) => table(
    ["n", "b estimate", "b on E₁", "b on E₂", "B cap", "min ‖ve‖/‖e‖", "redraws", "threshold 32·B·gl", "feasible"],
    [[ok.n, ok.b_hat, ok.b_e1, ok.b_e2, ok.b_cap, ok.min_lower_ratio, ok.redraws, ok.threshold, ok.feasible]]));
};
