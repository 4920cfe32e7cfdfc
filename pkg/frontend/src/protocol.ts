// WebSocket protocol types and helpers, versioned "v": 1.
// The server is the single source of truth: every number the UI shows
// originates from a state message; the client never solves anything.

export interface TransformJson {
  wxyz: [number, number, number, number];
  pos: [number, number, number];
}

export interface SphereJson {
  center: [number, number, number];
  radius: number;
}

export type ObstacleJson =
  | { type: 'sphere'; center: number[]; radius: number }
  | { type: 'capsule'; endpoint_a: number[]; endpoint_b: number[]; radius: number }
  | { type: 'halfspace'; normal: number[]; offset: number };

export interface VisualJson {
  kind: 'box' | 'cylinder' | 'sphere';
  origin_xyz: number[];
  origin_rpy: number[];
  size?: number[];
  radius?: number;
  length?: number;
}

export interface ModelMessage {
  type: 'model';
  v: 1;
  links: string[];
  target_link: string;
  visuals: Record<string, VisualJson[]>;
  collision_spheres: Record<string, SphereJson[]>;
}

export interface StateMessage {
  type: 'state';
  v: 1;
  q: number[];
  link_poses: Record<string, TransformJson>;
  weights: Record<string, number>;
  target_pose: TransformJson;
  obstacles: { obstacles: ObstacleJson[] };
  cost_breakdown: Record<string, number>;
  solve_stats: { iterations: number; final_cost: number; ms: number };
  manipulability: { eigenvalues: number[]; axes: number[][] };
}

export interface ErrorMessage {
  type: 'error';
  detail: string;
}

export type ServerMessage = ModelMessage | StateMessage | ErrorMessage;

export type ClientEdit =
  | { type: 'set_weight'; name: string; value: number }
  | { type: 'set_target'; pose: TransformJson }
  | { type: 'move_obstacle'; index: number; pose: TransformJson }
  | { type: 'reset' }
  | { type: 'reseed' };

export function encodeEdit(edit: ClientEdit): string {
  return JSON.stringify(edit);
}

export function parseServerMessage(raw: string): ServerMessage {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    throw new Error('server sent invalid JSON');
  }
  if (typeof data !== 'object' || data === null || !('type' in data)) {
    throw new Error('server message has no type');
  }
  const msg = data as { type: string };
  if (msg.type === 'model' || msg.type === 'state') {
    if ((data as { v?: number }).v !== 1) {
      throw new Error(`unsupported protocol version ${(data as { v?: number }).v}`);
    }
    return data as ModelMessage | StateMessage;
  }
  if (msg.type === 'error') {
    return data as ErrorMessage;
  }
  throw new Error(`unknown server message type '${msg.type}'`);
}

// Identity of an edit for latest-wins coalescing: edits with the same key
// overwrite each other while waiting to be sent, everything else is kept.
export function editKey(edit: ClientEdit): string {
  switch (edit.type) {
    case 'set_weight':
      return `set_weight:${edit.name}`;
    case 'move_obstacle':
      return `move_obstacle:${edit.index}`;
    default:
      return edit.type;
  }
}
