import init, { bend_profile, weight_field, compare_segmentation } from "./pkg/rooffit_web.js";

const $ = (id) => document.getElementById(id);
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

function fail(out, e) {
  out.textContent = "error: " + e;
}

function drawBend() {
  const out = $("bend-out");
  const spherical = document.querySelector("input[name=shape]:checked").value === "sph";
  let p;
  try {
    p = JSON.parse(bend_profile(spherical, +$("bend-radius").value, +$("bend-noise").value, 7));
  } catch (e) {
    return fail(out, e);
  }
  const c = $("bend"), g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const zs = p.before.concat(p.after, p.surface);
  const lo = Math.min(...zs) - 0.3, hi = Math.max(...zs) + 0.3;
  const sx = (s) => ((s + 5.5) / 11) * c.width;
  const sy = (z) => c.height - ((z - lo) / (hi - lo)) * c.height;
  g.strokeStyle = "#999";
  g.beginPath();
  p.across.forEach((s, i) => (i ? g.lineTo(sx(s), sy(p.surface[i])) : g.moveTo(sx(s), sy(p.surface[i]))));
  g.stroke();
  const dots = (zs, color) => {
    g.fillStyle = color;
    p.across.forEach((s, i) => g.fillRect(sx(s) - 1.5, sy(zs[i]) - 1.5, 3, 3));
  };
  dots(p.before, "#888");
  dots(p.after, "#1f77b4");
  out.textContent = `${p.points} points bent, largest residual change ${p.max_residual_change.toExponential(1)} m`;
}

function drawWeight() {
  const out = $("weight-out");
  let f;
  try {
    f = JSON.parse(weight_field(+$("w-dis").value, +$("w-nv").value, +$("w-rgb").value, +$("w-dc").value));
  } catch (e) {
    return fail(out, e);
  }
  const c = $("weight"), g = c.getContext("2d");
  const img = g.createImageData(f.width, f.height);
  f.values.forEach((w, i) => {
    const v = Math.round(255 * w);
    img.data.set([255 - v, 255 - Math.round(v * 0.6), 255, 255], 4 * i);
  });
  const tmp = new OffscreenCanvas(f.width, f.height);
  tmp.getContext("2d").putImageData(img, 0, 0);
  g.imageSmoothingEnabled = false;
  g.drawImage(tmp, 0, 0, c.width, c.height);
  out.textContent = `distance 0 to ${f.max_distance} m, tilt 0 to ${f.max_tilt_deg} deg, ` +
    `weight at origin ${f.values[0].toFixed(3)}`;
}

function drawSegments(canvas, x, y, seg) {
  const g = canvas.getContext("2d");
  g.clearRect(0, 0, canvas.width, canvas.height);
  const s = canvas.width / 30;
  x.forEach((xi, i) => {
    g.fillStyle = seg[i] < 0 ? "#ccc" : COLORS[seg[i] % COLORS.length];
    g.fillRect(xi * s - 1, canvas.height - y[i] * s - 1, 2, 2);
  });
}

function runComparison() {
  const btn = $("c-run");
  btn.disabled = true;
  // let the button repaint before the work starts
  setTimeout(() => {
    try {
      const r = JSON.parse(compare_segmentation(+$("c-wave").value, Math.max(0, +$("c-seed").value | 0)));
      drawSegments($("hier"), r.x, r.y, r.hierarchical);
      drawSegments($("flat"), r.x, r.y, r.single_level);
      $("hier-out").textContent = `pyramid: ${r.hierarchical_count} planes`;
      $("flat-out").textContent = `single level: ${r.single_level_count} planes`;
    } catch (e) {
      fail($("hier-out"), e);
    } finally {
      btn.disabled = false;
    }
  }, 10);
}

await init();
document.querySelectorAll("input[name=shape], #bend-radius, #bend-noise").forEach((el) => el.addEventListener("input", drawBend));
["w-dis", "w-nv", "w-rgb", "w-dc"].forEach((id) => $(id).addEventListener("input", drawWeight));
$("c-run").addEventListener("click", runComparison);
drawBend();
drawWeight();
runComparison();
