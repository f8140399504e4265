// Canvas renderer: top-down room view with the user, the approaching robot,
// protocol angle guides, and the optional discomfort heatmap overlay.

import { PoseDoc, RoomDoc } from "./api.js";
import { heatmapCells } from "./heatmap.js";
import { robotPosition, UiSessionState } from "./model.js";

const PROTOCOL_ANGLES = Array.from({ length: 9 }, (_, i) => -Math.PI / 2 + (i * Math.PI) / 8);

interface Transform {
  scale: number;
  ox: number;
  oy: number;
}

function fitRoom(room: RoomDoc, width: number, height: number, margin = 24): Transform {
  const xs = room.vertices.map((v) => v[0]);
  const ys = room.vertices.map((v) => v[1]);
  const xmin = Math.min(...xs);
  const xmax = Math.max(...xs);
  const ymin = Math.min(...ys);
  const ymax = Math.max(...ys);
  const scale = Math.min(
    (width - 2 * margin) / (xmax - xmin),
    (height - 2 * margin) / (ymax - ymin),
  );
  return {
    scale,
    ox: margin - xmin * scale,
    oy: height - margin + ymin * scale,
  };
}

function toCanvas(t: Transform, x: number, y: number): [number, number] {
  return [t.ox + x * t.scale, t.oy - y * t.scale]; // +y up in room coordinates
}

export function renderScene(
  canvas: HTMLCanvasElement,
  state: UiSessionState,
  showHeatmap: boolean,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!state.room || !state.userPose) {
    ctx.fillStyle = "#667";
    ctx.font = "16px sans-serif";
    ctx.fillText("Start a session to see the room.", 20, 40);
    return;
  }
  const t = fitRoom(state.room, canvas.width, canvas.height);

  if (showHeatmap && state.heatmap) {
    for (const cell of heatmapCells(state.heatmap.cells, state.heatmap.bbox)) {
      const [cx, cy] = toCanvas(t, cell.x, cell.y + cell.h);
      ctx.fillStyle = cell.color;
      ctx.fillRect(cx, cy, cell.w * t.scale + 0.5, cell.h * t.scale + 0.5);
    }
  }

  drawRoom(ctx, t, state.room);
  drawAngleGuides(ctx, t, state.userPose);
  drawUser(ctx, t, state.userPose);

  if (state.approach) {
    const [rx, ry] = robotPosition(state.userPose, state.approach.angle,
                                   state.approach.distance);
    drawRobot(ctx, t, rx, ry, state.approach.dialogue.object);
  }
}

function drawRoom(ctx: CanvasRenderingContext2D, t: Transform, room: RoomDoc): void {
  ctx.beginPath();
  room.vertices.forEach(([x, y], i) => {
    const [cx, cy] = toCanvas(t, x, y);
    if (i === 0) ctx.moveTo(cx, cy);
    else ctx.lineTo(cx, cy);
  });
  ctx.closePath();
  ctx.strokeStyle = "#2b2d42";
  ctx.lineWidth = 3;
  ctx.stroke();
}

function drawAngleGuides(ctx: CanvasRenderingContext2D, t: Transform, pose: PoseDoc): void {
  ctx.save();
  ctx.setLineDash([4, 6]);
  ctx.strokeStyle = "rgba(43, 45, 66, 0.25)";
  ctx.lineWidth = 1;
  for (const angle of PROTOCOL_ANGLES) {
    const [ex, ey] = robotPosition(pose, angle, 2.0);
    const [ux, uy] = toCanvas(t, pose.x, pose.y);
    const [cx, cy] = toCanvas(t, ex, ey);
    ctx.beginPath();
    ctx.moveTo(ux, uy);
    ctx.lineTo(cx, cy);
    ctx.stroke();
  }
  ctx.restore();
}

function drawUser(ctx: CanvasRenderingContext2D, t: Transform, pose: PoseDoc): void {
  const [cx, cy] = toCanvas(t, pose.x, pose.y);
  const r = 0.25 * t.scale;
  // heading wedge
  ctx.beginPath();
  ctx.moveTo(cx, cy);
  ctx.arc(cx, cy, r * 1.8, -pose.heading - 0.5, -pose.heading + 0.5);
  ctx.closePath();
  ctx.fillStyle = "rgba(58, 134, 255, 0.3)";
  ctx.fill();
  ctx.beginPath();
  ctx.arc(cx, cy, r, 0, 2 * Math.PI);
  ctx.fillStyle = "#3a86ff";
  ctx.fill();
  ctx.strokeStyle = "#fff";
  ctx.lineWidth = 2;
  ctx.stroke();
}

function drawRobot(ctx: CanvasRenderingContext2D, t: Transform,
                   x: number, y: number, carried: string): void {
  const [cx, cy] = toCanvas(t, x, y);
  const r = 0.18 * t.scale;
  ctx.beginPath();
  ctx.arc(cx, cy, r, 0, 2 * Math.PI);
  ctx.fillStyle = "#ef476f";
  ctx.fill();
  ctx.strokeStyle = "#fff";
  ctx.lineWidth = 2;
  ctx.stroke();
  ctx.font = `${Math.max(11, 0.2 * t.scale)}px sans-serif`;
  ctx.textAlign = "center";
  ctx.fillStyle = "#2b2d42";
  ctx.fillText(carried, cx, cy - r - 6);
}

export function renderStopChart(canvas: HTMLCanvasElement,
                                data: { angle: number; stops: number[] }[]): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const pad = 28;
  const w = canvas.width - 2 * pad;
  const h = canvas.height - 2 * pad;
  ctx.strokeStyle = "#aab";
  ctx.strokeRect(pad, pad, w, h);
  ctx.font = "10px sans-serif";
  ctx.fillStyle = "#445";
  ctx.textAlign = "center";
  const angleToX = (a: number) => pad + ((a + Math.PI / 2) / Math.PI) * w;
  const distToY = (d: number) => pad + h - (d / 2.0) * h;
  for (const deg of [-90, -45, 0, 45, 90]) {
    ctx.fillText(`${deg}°`, angleToX((deg * Math.PI) / 180), canvas.height - 8);
  }
  for (const d of [0.5, 1.0, 1.5, 2.0]) {
    ctx.fillText(d.toFixed(1), 12, distToY(d) + 3);
  }
  for (const { angle, stops } of data) {
    for (const stop of stops) {
      ctx.beginPath();
      ctx.arc(angleToX(angle), distToY(stop), 4, 0, 2 * Math.PI);
      ctx.fillStyle = "rgba(239, 71, 111, 0.75)";
      ctx.fill();
    }
  }
}
