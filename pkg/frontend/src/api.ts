// Typed client for the proxilab session service.

export interface RoomDoc {
  vertices: [number, number][];
}

export interface PoseDoc {
  x: number;
  y: number;
  heading: number;
}

export interface DialogueItem {
  object: string;
  question: string;
  answers: [string, string];
  responses: [string, string];
}

export interface NextApproach {
  approach_id: string;
  angle: number;
  start_position: [number, number];
  start_distance: number;
  speed_mps: number;
  dialogue: DialogueItem;
}

export interface FineTuneResult {
  pre_mae: number;
  post_mae: number;
  model_ref: string;
}

export interface Heatmap {
  resolution: number;
  bbox: [number, number, number, number];
  model: string;
  cells: (number | null)[][];
}

export interface SessionExport {
  session_id: string;
  events: { seq: number; event: string; data: Record<string, unknown> }[];
  model_ref: string | null;
  model: unknown;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  let resp: Response;
  try {
    resp = await fetch(url, init);
  } catch (err) {
    throw new ApiError(0, `network failure: ${String(err)}`);
  }
  const body = await resp.text();
  if (!resp.ok) {
    let message = body;
    try {
      message = (JSON.parse(body) as { message?: string }).message ?? body;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(resp.status, message);
  }
  return JSON.parse(body) as T;
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  createSession(room: RoomDoc, userPose: PoseDoc, strategy: "atl" | "random",
                seed: number): Promise<{ session_id: string }> {
    return request(this.url("/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ room, user_pose: userPose, strategy, seed }),
    });
  }

  next(sessionId: string): Promise<NextApproach> {
    return request(this.url(`/sessions/${sessionId}/next`));
  }

  stop(sessionId: string, approachId: string, stopDistance: number,
       answerIndex: 0 | 1): Promise<{ robot_response: string }> {
    return request(this.url(`/sessions/${sessionId}/stop`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        approach_id: approachId,
        stop_distance: stopDistance,
        answer_index: answerIndex,
      }),
    });
  }

  fineTune(sessionId: string): Promise<FineTuneResult> {
    return request(this.url(`/sessions/${sessionId}/finetune`), { method: "POST" });
  }

  heatmap(sessionId: string, resolution: number): Promise<Heatmap> {
    return request(this.url(`/sessions/${sessionId}/heatmap?resolution=${resolution}`));
  }

  exportSession(sessionId: string): Promise<SessionExport> {
    return request(this.url(`/sessions/${sessionId}/export`));
  }
}
