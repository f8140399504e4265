// Pure session state machine and approach animation math. No DOM here:
// everything is driven by explicit tick(dt) calls so it is directly testable
// and the render loop stays a thin shell.

import {
  ApiClient,
  ApiError,
  DialogueItem,
  FineTuneResult,
  Heatmap,
  NextApproach,
  PoseDoc,
  RoomDoc,
} from "./api.js";

export const DEFAULT_AUTO_STOP_FLOOR = 0.3;

export type Phase = "idle" | "approaching" | "question" | "submitting";

export interface ActiveApproach {
  approachId: string;
  angle: number;
  start: [number, number];
  startDistance: number;
  speedMps: number;
  dialogue: DialogueItem;
  distance: number;
  frozen: boolean;
  autoStopped: boolean;
  stopDistance: number | null;
}

export interface CompletedApproach {
  approachId: string;
  angle: number;
  stopDistance: number;
  answerIndex: 0 | 1;
  response: string;
  autoStopped: boolean;
}

export interface UiSessionState {
  sessionId: string | null;
  room: RoomDoc | null;
  userPose: PoseDoc | null;
  strategy: "atl" | "random";
  phase: Phase;
  approach: ActiveApproach | null;
  history: CompletedApproach[];
  heatmap: Heatmap | null;
  fineTune: FineTuneResult | null;
  lastError: string | null;
}

export function robotPosition(
  pose: PoseDoc, angle: number, distance: number): [number, number] {
  const world = pose.heading + angle;
  return [pose.x + distance * Math.cos(world), pose.y + distance * Math.sin(world)];
}

/** Advance the robot toward the user; returns true when it hits the floor. */
export function tickApproach(
  approach: ActiveApproach, dtSeconds: number,
  floor: number = DEFAULT_AUTO_STOP_FLOOR): boolean {
  if (approach.frozen) return false;
  approach.distance = Math.max(floor, approach.distance - approach.speedMps * dtSeconds);
  if (approach.distance <= floor) {
    approach.frozen = true;
    approach.autoStopped = true;
    approach.stopDistance = floor;
    return true;
  }
  return false;
}

export function freezeApproach(approach: ActiveApproach): number {
  approach.frozen = true;
  approach.stopDistance = approach.distance;
  return approach.distance;
}

export class SessionController {
  state: UiSessionState = {
    sessionId: null,
    room: null,
    userPose: null,
    strategy: "atl",
    phase: "idle",
    approach: null,
    history: [],
    heatmap: null,
    fineTune: null,
    lastError: null,
  };

  constructor(private api: ApiClient,
              private autoStopFloor: number = DEFAULT_AUTO_STOP_FLOOR) {}

  async start(room: RoomDoc, userPose: PoseDoc, strategy: "atl" | "random",
              seed: number): Promise<string> {
    const { session_id } = await this.api.createSession(room, userPose, strategy, seed);
    this.state = {
      ...this.state,
      sessionId: session_id,
      room,
      userPose,
      strategy,
      phase: "idle",
      approach: null,
      history: [],
      heatmap: null,
      fineTune: null,
      lastError: null,
    };
    return session_id;
  }

  private requireSession(): string {
    if (!this.state.sessionId) throw new Error("no active session");
    return this.state.sessionId;
  }

  async nextApproach(): Promise<ActiveApproach> {
    const sid = this.requireSession();
    if (this.state.phase !== "idle") {
      throw new Error(`cannot start an approach while ${this.state.phase}`);
    }
    const next: NextApproach = await this.api.next(sid);
    const approach: ActiveApproach = {
      approachId: next.approach_id,
      angle: next.angle,
      start: next.start_position,
      startDistance: next.start_distance,
      speedMps: next.speed_mps,
      dialogue: next.dialogue,
      distance: next.start_distance,
      frozen: false,
      autoStopped: false,
      stopDistance: null,
    };
    this.state.approach = approach;
    this.state.phase = "approaching";
    this.state.lastError = null;
    return approach;
  }

  /** Animation step; flips to the question phase on an auto-stop. */
  tick(dtSeconds: number): void {
    if (this.state.phase !== "approaching" || !this.state.approach) return;
    if (tickApproach(this.state.approach, dtSeconds, this.autoStopFloor)) {
      this.state.phase = "question";
    }
  }

  /** The stop-sign button: freeze the robot where it is and ask the question. */
  pressStop(): number {
    if (this.state.phase !== "approaching" || !this.state.approach) {
      throw new Error("no approach in progress");
    }
    const distance = freezeApproach(this.state.approach);
    this.state.phase = "question";
    return distance;
  }

  /** Answer the robot's question; posts the stop and finishes the approach. */
  async answer(index: 0 | 1): Promise<CompletedApproach> {
    const sid = this.requireSession();
    const approach = this.state.approach;
    if (this.state.phase !== "question" || !approach || approach.stopDistance === null) {
      throw new Error("no answered approach pending");
    }
    this.state.phase = "submitting";
    try {
      const { robot_response } = await this.api.stop(
        sid, approach.approachId, approach.stopDistance, index);
      const completed: CompletedApproach = {
        approachId: approach.approachId,
        angle: approach.angle,
        stopDistance: approach.stopDistance,
        answerIndex: index,
        response: robot_response,
        autoStopped: approach.autoStopped,
      };
      this.state.history.push(completed);
      this.state.approach = null;
      this.state.phase = "idle";
      return completed;
    } catch (err) {
      // keep the approach so the user can retry after a network failure
      this.state.phase = "question";
      this.state.lastError = err instanceof ApiError ? err.message : String(err);
      throw err;
    }
  }

  async fineTune(): Promise<FineTuneResult> {
    const sid = this.requireSession();
    const result = await this.api.fineTune(sid);
    this.state.fineTune = result;
    return result;
  }

  async refreshHeatmap(resolution: number = 64): Promise<Heatmap> {
    const sid = this.requireSession();
    const heatmap = await this.api.heatmap(sid, resolution);
    this.state.heatmap = heatmap;
    return heatmap;
  }

  async exportSession() {
    return this.api.exportSession(this.requireSession());
  }

  /** Mean stop distance per angle, for the dashboard chart. */
  stopsByAngle(): { angle: number; stops: number[] }[] {
    const byAngle = new Map<number, number[]>();
    for (const item of this.state.history) {
      const list = byAngle.get(item.angle) ?? [];
      list.push(item.stopDistance);
      byAngle.set(item.angle, list);
    }
    return [...byAngle.entries()]
      .sort((a, b) => a[0] - b[0])
      .map(([angle, stops]) => ({ angle, stops }));
  }
}
