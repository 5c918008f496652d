// Wire types, mirroring the steerd JSON protocol verbatim.

export type PhaseMode = "coupled" | "forced" | "frozen";

export interface FramePacket {
  t: number;
  R: number;
  mean_phase: number;
  output: number[];
  mode: PhaseMode;
  lambda_estimate: number | null;
}

export type SteerCommand =
  | { kind: "set_mode"; mode: PhaseMode }
  | { kind: "set_omega"; value: number }
  | { kind: "freeze" }
  | { kind: "switch_input"; lambda: number | null };

export interface CommandAck {
  status: "ok" | "error";
  applied_frame?: number;
  error?: string;
  detail?: string;
}

/**
 * A parsed frame plus the raw wire tokens for byte-faithful display:
 * what the operator reads is exactly what the service sent, never a
 * re-rendered float.
 */
export interface ReceivedFrame {
  packet: FramePacket;
  rawLine: string;
  rawR: string;
  rawMeanPhase: string;
  rawLambdaEstimate: string;
}
