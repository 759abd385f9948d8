/**
 * View state and the message reducer.
 *
 * The UI renders only engine-reported state: every tutoring-relevant field
 * below is written exclusively by `applyMessage` from engine messages, so a
 * disconnect/reconnect lands on exactly what the engine's snapshot says.
 * Local keyboard input never touches this state (the engine echoes it back
 * through cues, clutch updates, and mistakes).
 */

import {
    EngineMessage,
    SCHEMA_VERSION,
    msgNumber,
    msgNumberList,
    msgString,
    msgStringList,
} from "./schema.js";
import { DEFAULT_BINDING, HOLE_COUNT, KeyBinding } from "./frames.js";

/** How long a mistake keeps its lane note lit, in engine-clock ms. */
export const MISTAKE_FLASH_MS = 300;

/** Lane length: the current cue plus a short trail of played ones. */
export const LANE_DEPTH = 8;

export type ConnectionStatus = "connecting" | "open" | "closed";

export type LaneNote = Readonly<{ note: number; pitch: number; t: number }>;

export type UiState = Readonly<{
    connection: ConnectionStatus;
    banner: string | null;
    session: string | null;
    scoreId: string | null;
    method: string | null;
    runState: string;
    phase: string | null;
    passIndex: number;
    noteCount: number;
    engineNow: number;
    clutch: ReadonlyArray<string>;
    lane: ReadonlyArray<LaneNote>;
    notesRemaining: number;
    fingerFlashUntil: ReadonlyArray<number>;
    noteFlashUntil: Readonly<Record<number, number>>;
    passMistakes: number;
    totalMistakes: number;
    passed: boolean | null;
    minutes: number | null;
    rate: number | null;
    phasesSeen: ReadonlyArray<string>;
    latenciesMs: ReadonlyArray<number>;
    binding: KeyBinding;
}>;

export const initialState = (): UiState => ({
    connection: "connecting",
    banner: null,
    session: null,
    scoreId: null,
    method: null,
    runState: "idle",
    phase: null,
    passIndex: 0,
    noteCount: 0,
    engineNow: 0,
    clutch: new Array(HOLE_COUNT).fill("detached"),
    lane: [],
    notesRemaining: 0,
    fingerFlashUntil: new Array(HOLE_COUNT).fill(0),
    noteFlashUntil: {},
    passMistakes: 0,
    totalMistakes: 0,
    passed: null,
    minutes: null,
    rate: null,
    phasesSeen: [],
    latenciesMs: [],
    binding: DEFAULT_BINDING,
});

/** A view update: the next state plus pitch degrees to sound right now. */
export type ViewUpdate = Readonly<{ state: UiState; tones: ReadonlyArray<number> }>;

const still = (state: UiState): ViewUpdate => ({ state, tones: [] });

export const connectionChanged = (state: UiState, connection: ConnectionStatus): UiState => ({
    ...state,
    connection,
});

export const rebound = (state: UiState, binding: KeyBinding): UiState => ({ ...state, binding });

// ---------------------------------------------------------------------------
// Reducer
// ---------------------------------------------------------------------------

/**
 * Fold one engine message into the view. `clientNowMs` is the local session
 * clock, used only for latency samples taken from ping echoes.
 */
export const applyMessage = (
    state: UiState,
    msg: EngineMessage,
    clientNowMs: number,
): ViewUpdate => {
    if (msg["v"] !== SCHEMA_VERSION) {
        return still({
            ...state,
            banner: `unsupported message version ${JSON.stringify(msg["v"] ?? null)}`,
        });
    }
    const t = msgNumber(msg, "t");
    if (t !== null && t > state.engineNow) {
        state = { ...state, engineNow: t };
    }
    switch (msgString(msg, "type")) {
        case "snapshot":
            return still({
                ...state,
                session: msgString(msg, "session"),
                scoreId: msgString(msg, "score"),
                method: msgString(msg, "method"),
                runState: msgString(msg, "state") ?? state.runState,
                phase: msgString(msg, "phase"),
                passIndex: msgNumber(msg, "pass_index") ?? 0,
                noteCount: msgNumber(msg, "note_count") ?? 0,
                clutch: msgStringList(msg, "clutch") ?? state.clutch,
                totalMistakes: msgNumber(msg, "mistakes") ?? 0,
                lane: [],
                notesRemaining: msgNumber(msg, "note_count") ?? 0,
                fingerFlashUntil: new Array(HOLE_COUNT).fill(0),
                noteFlashUntil: {},
                passMistakes: 0,
                passed: null,
            });
        case "phase_change": {
            const phase = msgString(msg, "phase") ?? "?";
            const seen = state.phasesSeen;
            return still({
                ...state,
                phase,
                passIndex: msgNumber(msg, "pass_index") ?? state.passIndex,
                runState: msgString(msg, "state") ?? state.runState,
                lane: [],
                notesRemaining: state.noteCount,
                noteFlashUntil: {},
                passMistakes: 0,
                phasesSeen: seen[seen.length - 1] === phase ? seen : [...seen, phase],
            });
        }
        case "cue": {
            const note = msgNumber(msg, "note");
            const pitch = msgNumber(msg, "pitch");
            if (note === null || pitch === null) {
                return still(state);
            }
            const lane = [...state.lane, { note, pitch, t: t ?? state.engineNow }];
            return {
                state: {
                    ...state,
                    lane: lane.slice(-LANE_DEPTH),
                    notesRemaining: Math.max(state.noteCount - (note + 1), 0),
                },
                tones: [pitch],
            };
        }
        case "hint": {
            const fingers = msgNumberList(msg, "fingers") ?? [];
            const pulse = msgNumber(msg, "pulse_ms") ?? 0;
            const lit = [...state.fingerFlashUntil];
            for (const finger of fingers) {
                if (finger >= 0 && finger < HOLE_COUNT) {
                    lit[finger] = (t ?? state.engineNow) + pulse;
                }
            }
            return still({ ...state, fingerFlashUntil: lit });
        }
        case "clutch":
            return still({ ...state, clutch: msgStringList(msg, "targets") ?? state.clutch });
        case "mistake": {
            const note = msgNumber(msg, "note");
            if (note === null) {
                return still(state);
            }
            return still({
                ...state,
                passMistakes: state.passMistakes + 1,
                noteFlashUntil: {
                    ...state.noteFlashUntil,
                    [note]: (t ?? state.engineNow) + MISTAKE_FLASH_MS,
                },
            });
        }
        case "metrics": {
            const passed = msg["passed"];
            return still({
                ...state,
                runState: msgString(msg, "state") ?? state.runState,
                phase: msgString(msg, "phase") ?? state.phase,
                passIndex: msgNumber(msg, "pass_index") ?? state.passIndex,
                passMistakes: msgNumber(msg, "mistakes") ?? state.passMistakes,
                totalMistakes: state.totalMistakes + (msgNumber(msg, "mistakes") ?? 0),
                passed: typeof passed === "boolean" ? passed : null,
                minutes: msgNumber(msg, "minutes"),
                rate: msgNumber(msg, "rate"),
            });
        }
        case "ack": {
            const echo = msg["echo"];
            if (echo === null || typeof echo !== "object") {
                return still(state);
            }
            const sent = (echo as Record<string, unknown>)["sent"];
            if (typeof sent !== "number") {
                return still(state);
            }
            return still({
                ...state,
                latenciesMs: [...state.latenciesMs, Math.max(clientNowMs - sent, 0)],
            });
        }
        case "error":
            return still({ ...state, banner: msgString(msg, "reason") ?? "engine error" });
        default:
            return still({
                ...state,
                banner: `unknown message type ${JSON.stringify(msg["type"] ?? null)}`,
            });
    }
};

// ---------------------------------------------------------------------------
// Render helpers
// ---------------------------------------------------------------------------

/**
 * True while a hint pulse keeps this finger lit, judged on the engine
 * clock; pass `at` to render with an interpolated engine time.
 */
export const isFingerLit = (state: UiState, finger: number, at = state.engineNow): boolean =>
    state.fingerFlashUntil[finger] > at;

/** True while a mistake keeps this lane note lit. */
export const isNoteLit = (state: UiState, note: number, at = state.engineNow): boolean =>
    (state.noteFlashUntil[note] ?? 0) > at;

/** Equal-tempered tone for a chart degree, anchored at C5. */
export const degreeToHz = (degree: number): number => 523.25 * Math.pow(2, degree / 12);

export const medianLatencyMs = (latencies: ReadonlyArray<number>): number | null => {
    if (latencies.length === 0) {
        return null;
    }
    const sorted = [...latencies].sort((a, b) => a - b);
    const mid = sorted.length >> 1;
    return sorted.length % 2 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2;
};
