import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { poseToPixel } from "../src/coords.js";
import { ComponentInspector } from "../src/inspector.js";
import { RolloutScrubber } from "../src/rollout.js";
import { EditorSession } from "../src/session.js";
import { FakeService } from "./fake_service.js";

async function setup(variant: "general" | "dynamic" = "dynamic") {
  const service = new FakeService({ variant });
  const api = new ApiClient("http://test", service.fetch);
  const session = await EditorSession.connect(api, 1);
  return { service, api, session };
}

describe("rollout scrubber", () => {
  it("fetches once and scrubs client-side", async () => {
    const { service, api, session } = await setup();
    const scrubber = new RolloutScrubber(api, session);
    const callsBefore = service.totalCalls;
    await scrubber.load(8);
    expect(service.totalCalls).toBe(callsBefore + 1);
    scrubber.scrub(3);
    scrubber.scrub(7);
    expect(service.totalCalls).toBe(callsBefore + 1); // no refetch
    expect(scrubber.length).toBe(8);
  });

  it("frame 0 shows the initial poses", async () => {
    const { api, session } = await setup();
    const scrubber = new RolloutScrubber(api, session);
    await scrubber.load(5);
    const initial = session.state.objects.map((o) =>
      poseToPixel((o.theta ?? o.theta_hat) as [number, number], session.side),
    );
    expect(scrubber.crosses(0)).toEqual(initial);
  });

  it("draws one cross per object per frame: total equals K * T", async () => {
    const { api, session } = await setup();
    const scrubber = new RolloutScrubber(api, session);
    const T = 30;
    await scrubber.load(T);
    const K = session.state.objects.length;
    expect(scrubber.crossCount()).toBe(K * T);
    for (let t = 0; t < T; t++) {
      expect(scrubber.crosses(t)).toHaveLength(K);
    }
  });

  it("rejects loading on a model without dynamics", async () => {
    const { api, session } = await setup("general");
    const scrubber = new RolloutScrubber(api, session);
    await expect(scrubber.load(5)).rejects.toThrow(/no dynamics/);
  });

  it("rejects out-of-range scrub positions", async () => {
    const { api, session } = await setup();
    const scrubber = new RolloutScrubber(api, session);
    await scrubber.load(4);
    expect(() => scrubber.scrub(4)).toThrow(/out of range/);
    expect(() => scrubber.scrub(-1)).toThrow(/out of range/);
  });
});

describe("component inspector", () => {
  it("toggling an object off matches the server render without it", async () => {
    const { service, api, session } = await setup();
    const inspector = new ComponentInspector(api, session);
    await inspector.load();

    await inspector.toggle(0);
    expect(inspector.visible(0)).toBe(false);
    // The inspector composite equals a direct server render of the state
    // with object 0 hidden: same endpoint, same pixels.
    const serverState = service.sessions.get(session.sessionId)!;
    expect(inspector.parts!.composite).toBe(service.render(serverState));
    expect(inspector.parts!.composite).toBe(session.image);

    await inspector.toggle(0);
    expect(inspector.visible(0)).toBe(true);
  });

  it("lists one component and one pixel centre per object", async () => {
    const { api, session } = await setup();
    const inspector = new ComponentInspector(api, session);
    const parts = await inspector.load();
    expect(parts.components).toHaveLength(session.state.objects.length);
    expect(parts.pixel_centers).toHaveLength(session.state.objects.length);
  });
});
