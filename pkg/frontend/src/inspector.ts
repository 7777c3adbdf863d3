import { ApiClient } from "./api.js";
import type { ComponentsPayload } from "./types.js";
import { EditorSession } from "./session.js";

/** Filmstrip of background + per-object renders with visibility toggles.
 *
 * Toggling goes through the same edit endpoint the main canvas uses, so the
 * composite shown here always matches a server render without the object.
 */
export class ComponentInspector {
  parts: ComponentsPayload | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly session: EditorSession,
  ) {}

  async load(): Promise<ComponentsPayload> {
    this.parts = await this.api.components(this.session.sessionId);
    return this.parts;
  }

  async toggle(k: number): Promise<void> {
    await this.session.edit({ op: "toggle_visible", k });
    await this.load();
  }

  visible(k: number): boolean {
    const o = this.session.state.objects[k];
    if (!o) throw new Error(`no object ${k}`);
    return o.visible;
  }
}
