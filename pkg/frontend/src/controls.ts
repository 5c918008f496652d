// Control-panel state: mirrors SteerCommand plus UI constraints.

import type { PhaseMode, SteerCommand } from "./types.js";

export interface ControlLimits {
  omegaMin: number;
  omegaMax: number;
  lambdaChoices: number[];
}

export class ControlState {
  selectedMode: PhaseMode = "frozen";
  omega = 0.0;
  selectedLambda: number | null = null;

  constructor(readonly limits: ControlLimits = {
    omegaMin: -0.1, omegaMax: 0.1, lambdaChoices: [0.18, 0.29],
  }) {}

  setOmega(value: number): boolean {
    if (!Number.isFinite(value)) return false;
    if (value < this.limits.omegaMin || value > this.limits.omegaMax) return false;
    this.omega = value;
    return true;
  }

  commandForMode(mode: PhaseMode): SteerCommand {
    this.selectedMode = mode;
    return { kind: "set_mode", mode };
  }

  commandForOmega(): SteerCommand {
    return { kind: "set_omega", value: this.omega };
  }

  commandForFreeze(): SteerCommand {
    this.selectedMode = "frozen";
    return { kind: "freeze" };
  }

  commandForInput(lambda: number | null): SteerCommand {
    this.selectedLambda = lambda;
    return { kind: "switch_input", lambda };
  }
}
