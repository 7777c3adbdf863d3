import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { poseToPixel } from "../src/coords.js";
import { EditorSession } from "../src/session.js";
import { FakeService } from "./fake_service.js";

async function connect(service: FakeService): Promise<EditorSession> {
  return EditorSession.connect(new ApiClient("http://test", service.fetch), 7);
}

describe("editor session", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  async function settle(session: EditorSession): Promise<void> {
    await vi.runAllTimersAsync();
    await session.settled();
  }

  it("drag to a point and back yields a pixel-identical image", async () => {
    const service = new FakeService();
    const session = await connect(service);
    const original = session.image;
    const home = session.handles[0]!.handle;

    session.drag(0, 4, 4);
    await settle(session);
    expect(session.image).not.toBe(original);

    session.drag(0, home[0], home[1]);
    await settle(session);
    expect(session.image).toBe(original);
  });

  it("a 20-event drag burst coalesces: requests <= events, last wins", async () => {
    const service = new FakeService();
    const session = await connect(service);
    const before = service.editCalls;

    for (let i = 0; i < 20; i++) {
      session.drag(0, 5 + i * 0.5, 10);
      await vi.advanceTimersByTimeAsync(10); // events 10 ms apart, < debounce
    }
    await settle(session);

    const requests = service.editCalls - before;
    expect(requests).toBeLessThanOrEqual(20);
    expect(requests).toBeGreaterThanOrEqual(1);
    // Final confirmed pose corresponds to the last drag point.
    const finalTheta = service.sessions.get(session.sessionId)!.objects[0]!.theta!;
    const finalPixel = poseToPixel(finalTheta as [number, number], session.side);
    expect(finalPixel[0]).toBeCloseTo(5 + 19 * 0.5, 10);
    expect(finalPixel[1]).toBeCloseTo(10, 10);
  });

  it("coalesces spaced bursts to roughly one request per pause", async () => {
    const service = new FakeService();
    const session = await connect(service);
    const before = service.editCalls;
    for (let burst = 0; burst < 3; burst++) {
      for (let i = 0; i < 5; i++) session.drag(0, 8 + i, 8);
      await settle(session);
    }
    expect(service.editCalls - before).toBe(3);
  });

  it("set_pose pins the object server-side", async () => {
    const service = new FakeService();
    const session = await connect(service);
    session.drag(0, 10, 10);
    await settle(session);
    expect(session.state.objects[0]!.pinned).toBe(true);
  });

  it("reverts the handle to the confirmed pose when the server errors", async () => {
    const service = new FakeService();
    const session = await connect(service);
    const confirmed = [...session.handles[0]!.handle];

    service.failEdits = true;
    session.drag(0, 1, 1);
    expect(session.handles[0]!.handle).toEqual([1, 1]); // local feedback
    await settle(session);
    expect(session.lastError).toContain("injected failure");
    expect(session.handles[0]!.handle).toEqual(confirmed);
  });

  it("discrete edits are immediate and refresh-safe", async () => {
    const service = new FakeService();
    const session = await connect(service);
    await session.edit({ op: "add_object" });
    expect(session.state.objects).toHaveLength(3);
    // A fresh read of the same session reproduces the exact image.
    const image = session.image;
    await session.refresh();
    expect(session.image).toBe(image);
  });

  it("keeps handle positions consistent with poses after edits", async () => {
    const service = new FakeService();
    const session = await connect(service);
    session.drag(1, 20, 6);
    await settle(session);
    const theta = session.state.objects[1]!.theta as [number, number];
    expect(session.handles[1]!.handle[0]).toBeCloseTo(
      poseToPixel(theta, session.side)[0],
      10,
    );
  });

  it("exposes the dynamics capability from the config", async () => {
    const dynamic = await connect(new FakeService({ variant: "dynamic" }));
    expect(dynamic.hasDynamics).toBe(true);
    const still = await connect(new FakeService({ variant: "general" }));
    expect(still.hasDynamics).toBe(false);
  });
});
