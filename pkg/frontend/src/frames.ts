/**
 * Keyboard-to-hole input: six bound keys mirror the six flute holes.
 *
 * The tracker holds the latest sampled keyboard state; the host loop sends
 * a frame on every coverage change and on a fixed heartbeat, so key bounce
 * faster than one frame period coalesces into the latest state.
 */

import { ClientMessage, FrameValues, SCHEMA_VERSION } from "./schema.js";

export const HOLE_COUNT = 6;

/** Heartbeat period for outbound sensor frames, in milliseconds. */
export const FRAME_PERIOD_MS = 20;

/** One key per finger, mouthpiece first; KeyboardEvent.code names. */
export type KeyBinding = ReadonlyArray<string>;

/** Home-row default in finger order. */
export const DEFAULT_BINDING: KeyBinding = ["KeyA", "KeyS", "KeyD", "KeyF", "KeyG", "KeyH"];

export type KeyEdge = Readonly<{ code: string; down: boolean }>;

const checkBinding = (binding: KeyBinding): void => {
    if (binding.length !== HOLE_COUNT || new Set(binding).size !== HOLE_COUNT) {
        throw new RangeError(`binding needs ${HOLE_COUNT} distinct keys, got ${binding.join(",")}`);
    }
};

export class KeyTracker {
    private covered: number[] = new Array(HOLE_COUNT).fill(0);
    private binding: KeyBinding;

    constructor(binding: KeyBinding = DEFAULT_BINDING) {
        checkBinding(binding);
        this.binding = [...binding];
    }

    /** Swap the key map; held holes carry over by finger, not by key. */
    rebind(binding: KeyBinding): void {
        checkBinding(binding);
        this.binding = [...binding];
    }

    boundKeys(): KeyBinding {
        return [...this.binding];
    }

    /** Returns true when hole coverage changed; unbound keys are ignored. */
    apply(edge: KeyEdge): boolean {
        const finger = this.binding.indexOf(edge.code);
        if (finger < 0) {
            return false;
        }
        const next = edge.down ? 1 : 0;
        if (this.covered[finger] === next) {
            return false;
        }
        this.covered[finger] = next;
        return true;
    }

    /** Current coverage snapshot; a fresh array every call. */
    values(): number[] {
        return [...this.covered];
    }
}

export const frameMessage = (values: FrameValues): ClientMessage => ({
    v: SCHEMA_VERSION,
    type: "frame",
    values: [...values],
});
