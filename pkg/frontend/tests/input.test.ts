import { describe, expect, it } from "vitest";

import { PedalInput, readGamepad } from "../src/input.js";

describe("pedal ramps", () => {
  it("idle pedals are zero", () => {
    const input = new PedalInput();
    const sample = input.tick(0.016);
    expect(sample.throttle).toBe(0);
    expect(sample.brake).toBe(0);
  });

  it("accelerate held one second saturates through the 0.5 s ramp", () => {
    const input = new PedalInput({ attackSeconds: 0.5, decaySeconds: 0.3 });
    input.setKeys(true, false);
    let sample = { throttle: 0, brake: 0 };
    for (let t = 0; t < 1.0; t += 0.016) {
      sample = input.tick(0.016);
    }
    expect(sample.throttle).toBe(1);
    expect(sample.brake).toBe(0);
  });

  it("ramp is roughly linear mid-attack", () => {
    const input = new PedalInput({ attackSeconds: 0.5, decaySeconds: 0.3 });
    input.setKeys(true, false);
    const sample = input.tick(0.25);
    expect(sample.throttle).toBeCloseTo(0.5, 5);
  });

  it("release decays back to zero", () => {
    const input = new PedalInput({ attackSeconds: 0.5, decaySeconds: 0.3 });
    input.setKeys(true, false);
    input.tick(1.0);
    input.setKeys(false, false);
    const sample = input.tick(0.5);
    expect(sample.throttle).toBe(0);
  });

  it("brake wins when both are pressed", () => {
    const input = new PedalInput();
    input.setKeys(true, true);
    const sample = input.tick(1.0);
    expect(sample.brake).toBe(1);
    expect(sample.throttle).toBe(0);
  });

  it("key mapping drives the ramps", () => {
    const input = new PedalInput({ attackSeconds: 0.1, decaySeconds: 0.1 });
    input.keyEvent("w", true);
    expect(input.tick(0.2).throttle).toBe(1);
    input.keyEvent("w", false);
    input.keyEvent(" ", true);
    const sample = input.tick(0.2);
    expect(sample.brake).toBe(1);
    expect(sample.throttle).toBe(0);
  });
});

describe("gamepad mapping", () => {
  const pad = (rt: number, lt: number) =>
    ({
      buttons: Array.from({ length: 8 }, (_, i) => ({
        value: i === 7 ? rt : i === 6 ? lt : 0,
      })),
    }) as unknown as Gamepad;

  it("reads trigger axes", () => {
    const pedals = readGamepad([pad(0.7, 0.2)]);
    expect(pedals).toEqual({ throttle: 0.7, brake: 0.2 });
  });

  it("ignores idle or missing pads", () => {
    expect(readGamepad([null, pad(0, 0)])).toBeNull();
    expect(readGamepad([])).toBeNull();
  });
});
