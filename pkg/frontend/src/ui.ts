import { ApiClient, ApiError } from "./api.js";
import { ComponentInspector } from "./inspector.js";
import { RolloutScrubber } from "./rollout.js";
import { EditorSession } from "./session.js";

/** Appearance latents above this count collapse to grouped sliders by
 * default, with a per-dimension expert view behind a toggle. */
const GROUPED_SLIDER_THRESHOLD = 16;
const GROUP_COUNT = 8;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text) node.textContent = text;
  return node;
}

export class EditorApp {
  private api!: ApiClient;
  private session: EditorSession | null = null;
  private inspector: ComponentInspector | null = null;
  private scrubber: RolloutScrubber | null = null;
  private expertSliders = false;

  constructor(private readonly root: HTMLElement) {}

  async connect(baseUrl: string): Promise<void> {
    this.api = new ApiClient(baseUrl);
    try {
      this.session = await EditorSession.connect(this.api);
      this.inspector = new ComponentInspector(this.api, this.session);
      this.scrubber = this.session.hasDynamics
        ? new RolloutScrubber(this.api, this.session)
        : null;
      this.render();
    } catch (e) {
      this.renderBanner(e, baseUrl);
    }
  }

  private renderBanner(e: unknown, baseUrl: string): void {
    this.root.replaceChildren();
    const banner = el("div", "error-banner");
    banner.append(
      el(
        "span",
        "",
        e instanceof ApiError ? e.message : `cannot reach ${baseUrl}`,
      ),
    );
    const retry = el("button", "", "retry");
    retry.onclick = () => void this.connect(baseUrl);
    banner.append(retry);
    this.root.replaceChildren(banner);
  }

  private render(): void {
    const s = this.session!;
    this.root.replaceChildren();

    const canvas = el("div", "canvas");
    const img = el("img");
    img.src = `data:image/png;base64,${s.image}`;
    img.width = img.height = s.side * 8;
    canvas.append(img);
    s.handles.forEach((h, k) => {
      const dot = el("div", "handle");
      dot.style.left = `${(h.handle[0] / s.side) * 100}%`;
      dot.style.top = `${(h.handle[1] / s.side) * 100}%`;
      dot.onpointerdown = () => this.trackDrag(k, img);
      canvas.append(dot);
    });
    this.root.append(canvas);

    this.root.append(this.buildControls());
    if (this.scrubber) this.root.append(this.buildScrubber());
    if (s.lastError) {
      this.root.append(el("div", "error-banner", s.lastError));
    }
  }

  private trackDrag(k: number, img: HTMLImageElement): void {
    const s = this.session!;
    const move = (ev: PointerEvent) => {
      const box = img.getBoundingClientRect();
      const px = ((ev.clientX - box.left) / box.width) * s.side;
      const py = ((ev.clientY - box.top) / box.height) * s.side;
      s.drag(k, px, py);
      void s.settled().then(() => this.render());
    };
    const up = () => {
      window.removeEventListener("pointermove", move);
      window.removeEventListener("pointerup", up);
    };
    window.addEventListener("pointermove", move);
    window.addEventListener("pointerup", up);
  }

  private buildControls(): HTMLElement {
    const s = this.session!;
    const panel = el("div", "controls");

    s.state.objects.forEach((o, k) => {
      const row = el("div", "object-row");
      row.append(el("span", "", `object ${k}`));
      const grouped =
        o.z.length > GROUPED_SLIDER_THRESHOLD && !this.expertSliders;
      const dims = grouped ? GROUP_COUNT : o.z.length;
      const perGroup = Math.ceil(o.z.length / dims);
      for (let d = 0; d < dims; d++) {
        const slider = el("input");
        slider.type = "range";
        slider.min = "-1";
        slider.max = "1";
        slider.step = "0.01";
        slider.value = String(o.z[Math.min(d * perGroup, o.z.length - 1)]);
        slider.oninput = () => {
          const z = [...o.z];
          const v = Number(slider.value);
          if (grouped) {
            for (let j = d * perGroup; j < Math.min((d + 1) * perGroup, z.length); j++) {
              z[j] = v;
            }
          } else {
            z[d] = v;
          }
          s.setAppearance(k, z);
          void s.settled().then(() => this.render());
        };
        row.append(slider);
      }
      const resample = el("button", "", "resample");
      resample.onclick = () =>
        void s.edit({ op: "resample_appearance", k }).then(() => this.render());
      const toggle = el("button", "", o.visible ? "hide" : "show");
      toggle.onclick = () =>
        void this.inspector!.toggle(k).then(() => this.render());
      row.append(resample, toggle);
      panel.append(row);
    });

    const bg = el("div", "object-row");
    bg.append(el("span", "", "background"));
    const resampleBg = el("button", "", "resample");
    resampleBg.onclick = () =>
      void this.session!
        .edit({ op: "resample_background" })
        .then(() => this.render());
    bg.append(resampleBg);
    panel.append(bg);

    const add = el("button", "", "add object");
    add.onclick = () =>
      void this.session!.edit({ op: "add_object" }).then(() => this.render());
    panel.append(add);

    if (this.session!.state.objects.some((o) => o.z.length > GROUPED_SLIDER_THRESHOLD)) {
      const expert = el("button", "", this.expertSliders ? "grouped view" : "expert view");
      expert.onclick = () => {
        this.expertSliders = !this.expertSliders;
        this.render();
      };
      panel.append(expert);
    }
    return panel;
  }

  private buildScrubber(): HTMLElement {
    const panel = el("div", "scrubber");
    const slider = el("input");
    slider.type = "range";
    slider.min = "0";
    const frame = el("img");
    const load = el("button", "", "roll out 30 frames");
    load.onclick = () =>
      void this.scrubber!.load(30).then(() => {
        slider.max = String(this.scrubber!.length - 1);
        slider.value = "0";
        frame.src = `data:image/png;base64,${this.scrubber!.scrub(0)}`;
      });
    slider.oninput = () => {
      const t = Number(slider.value);
      frame.src = `data:image/png;base64,${this.scrubber!.scrub(t)}`;
    };
    panel.append(load, slider, frame);
    return panel;
  }
}

export function mount(rootId = "app", url = "http://127.0.0.1:8000"): void {
  const root = document.getElementById(rootId);
  if (!root) throw new Error(`no #${rootId} element`);
  void new EditorApp(root).connect(url);
}
