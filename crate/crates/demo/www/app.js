// Static front end for the wasm demo. Build the wasm package first:
//   cargo build -p dmoe-demo --target wasm32-unknown-unknown --release
//   wasm-bindgen --target web --out-dir crates/demo/www/pkg \
//       target/wasm32-unknown-unknown/release/dmoe_demo.wasm
// then serve crates/demo/www/ with any static file server.

import init, { DemoSession } from "./pkg/dmoe_demo.js";

const $ = (id) => document.getElementById(id);
const status = (msg) => { $("status").textContent = msg; };

let session = null;

// Viridis-ish three-stop colormap.
function color(v) {
  const t = Math.min(1, Math.max(0, v));
  const r = Math.round(255 * Math.min(1, Math.max(0, 2.5 * t - 1.1)));
  const g = Math.round(255 * Math.pow(t, 1.3));
  const b = Math.round(255 * (0.35 + 0.5 * Math.sin(3.1 * t)));
  return [r, g, b];
}

function drawHeatmap(canvas, values, frames, bins, lo, hi) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(frames, bins);
  for (let t = 0; t < frames; t++) {
    for (let k = 0; k < bins; k++) {
      const v = (values[t * bins + k] - lo) / (hi - lo);
      const [r, g, b] = color(v);
      // Flip so low frequencies sit at the bottom.
      const idx = ((bins - 1 - k) * frames + t) * 4;
      img.data[idx] = r; img.data[idx + 1] = g; img.data[idx + 2] = b; img.data[idx + 3] = 255;
    }
  }
  const off = new OffscreenCanvas(frames, bins);
  off.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

function drawSpectrogram(canvas, values, frames, bins) {
  // Robust display range: clip at the 5th/99th percentile.
  const sorted = Float32Array.from(values).sort();
  const lo = sorted[Math.floor(sorted.length * 0.05)];
  const hi = sorted[Math.floor(sorted.length * 0.99)];
  drawHeatmap(canvas, values, frames, bins, lo, hi === lo ? lo + 1 : hi);
}

function drawRegimes(canvas, tags) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width / tags.length;
  for (let t = 0; t < tags.length; t++) {
    ctx.fillStyle = tags[t] === 0 ? "#4a7fd4" : "#d4894a";
    ctx.fillRect(t * w, 0, Math.ceil(w), canvas.height);
  }
}

function drawTrace(canvas, trace) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const lo = Math.min(...trace), hi = Math.max(...trace);
  const x = (i) => 10 + (canvas.width - 20) * i / Math.max(1, trace.length - 1);
  const y = (v) => canvas.height - 8 - (canvas.height - 16) * (v - lo) / Math.max(1e-9, hi - lo);
  ctx.strokeStyle = "#8ab4f8";
  ctx.lineWidth = 2;
  ctx.beginPath();
  trace.forEach((v, i) => (i === 0 ? ctx.moveTo(x(i), y(v)) : ctx.lineTo(x(i), y(v))));
  ctx.stroke();
  ctx.fillStyle = "#9aa3ad";
  ctx.font = "11px monospace";
  ctx.fillText(trace[0].toFixed(2), 10, 12);
  ctx.fillText(trace[trace.length - 1].toFixed(2), canvas.width - 70, 12);
}

function setAudio(el, bytes) {
  const blob = new Blob([bytes], { type: "audio/wav" });
  el.src = URL.createObjectURL(blob);
}

function refreshMixture() {
  const frames = session.frame_count();
  const bins = session.bin_count();
  drawSpectrogram($("noisy"), session.spectrogram("noisy"), frames, bins);
  drawSpectrogram($("clean"), session.spectrogram("clean"), frames, bins);
  drawRegimes($("regimes"), session.regime_track());
  setAudio($("noisyAudio"), session.noisy_wav());
  setAudio($("cleanAudio"), session.clean_wav());
  $("enhance").disabled = !session.has_model();
}

function rebuildSession() {
  const seed = Number($("seed").value) >>> 0;
  session = new DemoSession(seed);
  session.set_snr(Number($("snr").value));
  refreshMixture();
  $("spp").getContext("2d").clearRect(0, 0, 460, 200);
  $("enhanced").getContext("2d").clearRect(0, 0, 460, 200);
  $("gating").textContent = "";
  status("mixture ready — train a model");
}

async function main() {
  await init();
  rebuildSession();

  $("snr").oninput = () => { $("snrval").textContent = `${$("snr").value} dB`; };
  $("snr").onchange = () => {
    session.set_snr(Number($("snr").value));
    refreshMixture();
    status(`remixed at ${$("snr").value} dB`);
  };
  $("epochs").oninput = () => { $("epochsval").textContent = $("epochs").value; };
  $("beta").oninput = () => { $("betaval").textContent = Number($("beta").value).toFixed(2); };
  $("regen").onclick = rebuildSession;

  $("train").onclick = () => {
    const m = Number($("experts").value);
    const epochs = Number($("epochs").value);
    status(`training ${m} expert(s) for ${epochs} epochs…`);
    $("train").disabled = true;
    // Let the status paint before the long synchronous call.
    setTimeout(() => {
      try {
        const trace = session.train(m, epochs);
        drawTrace($("trace"), Array.from(trace));
        $("enhance").disabled = false;
        status(`trained: mean log-likelihood ${trace[0].toFixed(2)} → ${trace[trace.length - 1].toFixed(2)}`);
        $("gating").textContent = formatGating(JSON.parse(session.gating_json()));
      } catch (e) {
        status(`training failed: ${e}`);
      } finally {
        $("train").disabled = false;
      }
    }, 30);
  };

  $("enhance").onclick = () => {
    try {
      session.enhance(Number($("beta").value));
      const frames = session.frame_count();
      const bins = session.bin_count();
      drawHeatmap($("spp"), session.spp_grid(), frames, bins, 0, 1);
      drawSpectrogram($("enhanced"), session.spectrogram("enhanced"), frames, bins);
      setAudio($("enhancedAudio"), session.enhanced_wav());
      status(`enhanced at β = ${Number($("beta").value).toFixed(2)}`);
    } catch (e) {
      status(`enhancement failed: ${e}`);
    }
  };
}

function formatGating(stats) {
  const names = ["harmonic ", "noise    "];
  let out = "gate routing per regime (soft mean | hard fraction)\n";
  for (const row of stats.regimes) {
    const soft = row.mean_gate.map((v) => v.toFixed(2)).join(" ");
    const hard = row.hard_fraction.map((v) => v.toFixed(2)).join(" ");
    out += `  ${names[row.regime] ?? row.regime}  [${soft}] | [${hard}]  (${row.frames} frames)\n`;
  }
  out += `  routing entropy ${stats.routing_entropy.toFixed(3)} nats`;
  return out;
}

main().catch((e) => status(`failed to load wasm: ${e}`));
