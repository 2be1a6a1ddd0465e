// Overlay fidelity: drawn quad corners must match the server-provided
// image coordinates within one pixel after device-pixel-ratio scaling.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import {
  GREEN_FILL,
  RED_FILL,
  quadDrawCalls,
} from "../src/overlay.js";
import type { Snapshot } from "../src/protocol.js";

const here = dirname(fileURLToPath(import.meta.url));
const fixture: Snapshot = JSON.parse(
  readFileSync(join(here, "..", "fixtures", "snapshot.json"), "utf-8"),
);

describe("overlay fidelity", () => {
  it("fixture has visible server-projected quads", () => {
    expect(fixture.slots.length).toBeGreaterThan(0);
    expect(fixture.slots.some((s) => s.quad.visible)).toBe(true);
  });

  it.each([1, 1.5, 2])("corners match within 1 px at dpr %s", (dpr) => {
    const calls = quadDrawCalls(fixture.slots, dpr);
    const visible = fixture.slots.filter((s) => s.quad.visible);
    expect(calls.length).toBe(visible.length);
    calls.forEach((call, i) => {
      const server = visible[i].quad.corners;
      expect(call.points.length).toBe(4);
      call.points.forEach(([u, v], k) => {
        expect(Math.abs(u - server[k][0] * dpr)).toBeLessThanOrEqual(1);
        expect(Math.abs(v - server[k][1] * dpr)).toBeLessThanOrEqual(1);
      });
    });
  });

  it("never draws invisible quads", () => {
    const doctored = fixture.slots.map((s) => ({
      ...s,
      quad: { ...s.quad, visible: false },
    }));
    expect(quadDrawCalls(doctored, 1).length).toBe(0);
  });

  it("colors follow the slot status", () => {
    const calls = quadDrawCalls(fixture.slots, 1);
    const visible = fixture.slots.filter((s) => s.quad.visible);
    calls.forEach((call, i) => {
      const wantRed = visible[i].status === "reserved_red";
      expect(call.fill).toBe(wantRed ? RED_FILL : GREEN_FILL);
    });
  });
});
