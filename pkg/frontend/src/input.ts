// Pedal capture: keyboard keys ramp up while held and decay on release;
// gamepad axes map directly. Brake takes precedence when both are active.

export interface Pedals {
  throttle: number;
  brake: number;
}

export interface InputConfig {
  attackSeconds: number; // time from 0 to 1 while the key is held
  decaySeconds: number; // time from 1 back to 0 after release
}

export const DEFAULT_INPUT: InputConfig = { attackSeconds: 0.5, decaySeconds: 0.3 };

export class PedalInput {
  private throttleHeld = false;
  private brakeHeld = false;
  private throttle = 0;
  private brake = 0;

  constructor(private cfg: InputConfig = DEFAULT_INPUT) {}

  setKeys(throttleHeld: boolean, brakeHeld: boolean): void {
    this.throttleHeld = throttleHeld;
    this.brakeHeld = brakeHeld;
  }

  keyEvent(key: string, down: boolean): void {
    if (key === "ArrowUp" || key === "w") this.throttleHeld = down;
    if (key === "ArrowDown" || key === "s" || key === " ") this.brakeHeld = down;
  }

  /** Advance the ramps by dt seconds and return the pedal state. */
  tick(dt: number): Pedals {
    const up = dt / this.cfg.attackSeconds;
    const down = dt / this.cfg.decaySeconds;
    this.throttle = clamp01(this.throttle + (this.throttleHeld ? up : -down));
    this.brake = clamp01(this.brake + (this.brakeHeld ? up : -down));
    return this.sample();
  }

  /** Override both ramps from analog axes (gamepad triggers). */
  setAnalog(throttle: number, brake: number): Pedals {
    this.throttle = clamp01(throttle);
    this.brake = clamp01(brake);
    return this.sample();
  }

  sample(): Pedals {
    if (this.brake > 0) {
      return { throttle: 0, brake: this.brake }; // brake wins
    }
    return { throttle: this.throttle, brake: 0 };
  }
}

function clamp01(x: number): number {
  return Math.min(Math.max(x, 0), 1);
}

/** Read the first connected gamepad's pedals, if any. */
export function readGamepad(pads: (Gamepad | null)[]): Pedals | null {
  for (const pad of pads) {
    if (!pad) continue;
    // common layout: button 7 = right trigger (throttle), 6 = left (brake)
    const throttle = pad.buttons[7]?.value ?? 0;
    const brake = pad.buttons[6]?.value ?? 0;
    if (throttle > 0.02 || brake > 0.02) {
      return { throttle, brake };
    }
  }
  return null;
}
