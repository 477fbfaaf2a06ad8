// Shapes of the service's JSON API, as consumed by the console.

export type ActorKind = 'LEARNER' | 'STAFF' | 'ADMIN';

export type SessionMode = 'REAL' | 'SHADOW' | 'QUEUED' | 'RESTORING' | 'CLOSED';

export type Quality = 'GOOD' | 'UNCERTAIN' | 'BAD';

export interface VisibleActivity {
  activity_id: string;
  title: string;
  kind: 'LEARNING' | 'SUPPORT' | 'STRUCTURE';
  source_role_part: string;
  actionable: boolean;
  environment: {
    id: string;
    services: string[];
    learning_objects: string[];
    device_classes: string[];
  } | null;
}

export interface RunView {
  run_id: string;
  package_id: string;
  status: 'ACTIVE' | 'COMPLETED';
  assignments: Record<string, string[]>;
  play_states: Record<string, number>;
  revealed: string[];
}

export interface RunStatusView {
  run_id: string;
  status: 'ACTIVE' | 'COMPLETED';
  plays: {
    play_id: string;
    current_act_index: number | null;
    current_act_id: string | null;
    done: boolean;
  }[];
  users: { user: string; completed: number; total: number; fraction: number }[];
  queues: Record<string, string[]>;
}

export interface SessionView {
  session_id: string;
  booking_id: string;
  run_id: string;
  user: string;
  device_class: string;
  mode: SessionMode;
  device_id: string | null;
  da_endpoint: string;
  queue_position: number | null;
}

export interface ServiceEvent {
  seq: number;
  at: number;
  stream: 'RUN' | 'SESSION' | 'DEVICE' | 'ADMIN';
  stream_id: string;
  kind: string;
  actor: string;
  payload: Record<string, unknown>;
}

export interface HealthView {
  status: string;
  devices: number;
  last_seq: number;
  sim_time: number;
}
