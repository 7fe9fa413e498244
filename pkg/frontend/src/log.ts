/**
 * Flight-log loading: the fixed CSV schema written by `pampc run`, plus the
 * matching metrics JSON.
 */

import { readFileSync } from "fs";

/** Exact column order of the controller's log CSV. */
export const CSV_COLUMNS = [
  "t", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz",
  "c", "wx", "wy", "wz", "u_px", "v_px", "udot", "vdot", "depth_m",
  "visible", "solve_us", "kkt", "qp_iters", "status",
] as const;

export interface LogRecord {
  t: number;
  p: [number, number, number];
  v: [number, number, number];
  q: [number, number, number, number];
  u: [number, number, number, number];
  uPx: number;       // NaN on a depth fault
  vPx: number;
  udot: number;
  vdot: number;
  depth: number;
  visible: boolean;
  solveUs: number;
  kkt: number;
  qpIters: number;
  status: string;
}

export interface MetricsJson {
  center_distance_mean_px: number;
  center_distance_max_px: number;
  fov_visible_fraction: number;
  projection_speed_mean_px_s: number;
  max_altitude_m: number;
  max_abs_pitch_rad: number;
  input_bound_violations: number;
  solve_time_mean_us: number;
  solve_time_max_us: number;
  solve_time_std_us: number;
  tracking_rmse_m: number;
}

export class EmptyLog extends Error {}

export function parseLogCsv(text: string): LogRecord[] {
  const lines = text.trim().split("\n");
  if (lines.length === 0 || lines[0].split(",").join(",") !== CSV_COLUMNS.join(",")) {
    throw new Error("input does not match the pampc log CSV schema");
  }
  const records: LogRecord[] = [];
  for (const line of lines.slice(1)) {
    const f = line.split(",");
    if (f.length !== CSV_COLUMNS.length) {
      throw new Error(`malformed CSV row: ${line.slice(0, 60)}`);
    }
    records.push({
      t: Number(f[0]),
      p: [Number(f[1]), Number(f[2]), Number(f[3])],
      v: [Number(f[4]), Number(f[5]), Number(f[6])],
      q: [Number(f[7]), Number(f[8]), Number(f[9]), Number(f[10])],
      u: [Number(f[11]), Number(f[12]), Number(f[13]), Number(f[14])],
      uPx: Number(f[15]),
      vPx: Number(f[16]),
      udot: Number(f[17]),
      vdot: Number(f[18]),
      depth: Number(f[19]),
      visible: f[20] === "1",
      solveUs: Number(f[21]),
      kkt: Number(f[22]),
      qpIters: Number(f[23]),
      status: f[24],
    });
  }
  return records;
}

export function loadLog(path: string): LogRecord[] {
  const records = parseLogCsv(readFileSync(path, "utf-8"));
  if (records.length === 0) throw new EmptyLog(`log ${path} has no records`);
  return records;
}

export function loadMetrics(path: string): MetricsJson {
  return JSON.parse(readFileSync(path, "utf-8")) as MetricsJson;
}

/** Heading (yaw about world z) and tilt from upright, for the path glyphs. */
export function quatYaw(q: [number, number, number, number]): number {
  const [w, x, y, z] = q;
  return Math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z));
}

export function quatTilt(q: [number, number, number, number]): number {
  const [, x, y] = [q[0], q[1], q[2]];
  const c = 1 - 2 * (x * x + y * y);
  return Math.acos(Math.min(1, Math.max(-1, c)));
}

/** World direction of the camera's optical axis for a body-forward rig
 *  pitched down by `tiltDown` radians. */
export function opticalAxis(
  q: [number, number, number, number],
  tiltDown = Math.PI / 4,
): [number, number, number] {
  const axisBody: [number, number, number] = [Math.cos(tiltDown), 0, -Math.sin(tiltDown)];
  return rotate(q, axisBody);
}

function rotate(
  q: [number, number, number, number],
  v: [number, number, number],
): [number, number, number] {
  const [w, qx, qy, qz] = q;
  const [vx, vy, vz] = v;
  const tx = qy * vz - qz * vy + w * vx;
  const ty = qz * vx - qx * vz + w * vy;
  const tz = qx * vy - qy * vx + w * vz;
  return [
    vx + 2 * (qy * tz - qz * ty),
    vy + 2 * (qz * tx - qx * tz),
    vz + 2 * (qx * ty - qy * tx),
  ];
}
