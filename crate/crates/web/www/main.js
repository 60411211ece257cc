import init, { Demo } from "./pkg/shrubmap_web.js";

const $ = (id) => document.getElementById(id);
let demo = null;

function draw(canvas, rgba) {
  const n = demo.size();
  canvas.width = canvas.height = n;
  canvas.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(rgba), n, n), 0, 0);
}

function run(label, op) {
  $("summary").textContent = `${label}…`;
  // let the status paint before the wasm call blocks the thread
  setTimeout(() => {
    try {
      const t0 = performance.now();
      op();
      draw($("overlay"), demo.overlay_rgba());
      $("summary").textContent = `${demo.summary()} (${((performance.now() - t0) / 1000).toFixed(2)} s)`;
    } catch (e) {
      $("summary").textContent = `error: ${e.message ?? e}`;
    }
  }, 10);
}

function generate() {
  run("generating and training", () => {
    demo?.free();
    demo = new Demo(Number($("seed").value), Number($("blobs").value));
    draw($("scene"), demo.scene_rgba());
  });
}

await init();
$("generate").onclick = generate;
$("run-candidates").onclick = () => run("candidates", () => demo.candidates(Number($("gray").value), Number($("area").value)));
$("run-sliding").onclick = () => run("scanning", () => demo.sliding(Number($("window").value), Number($("stride").value)));
$("run-segment").onclick = () =>
  run("segmenting", () => demo.segment(Number($("scale").value), Number($("shape").value), Number($("compact").value)));
generate();
