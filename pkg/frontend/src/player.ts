/**
 * Scripted rehearsal hands for headless runs.
 *
 * The player behaves like a practiced human at the keyboard: it knows the
 * fingering chart, watches guidance cues, memorizes the note sequence they
 * reveal, reacts to each cue after a short reaction time, and sits the exam
 * from memory once the test phase arrives. It makes no tutoring decisions —
 * it only answers engine messages with key presses.
 */

import { EngineMessage, msgNumber, msgString } from "./schema.js";

/** degree -> six hole coverages (1 = covered); the player's chart knowledge. */
export type FingerChart = ReadonlyArray<ReadonlyArray<number>>;

export type PlayerHooks = Readonly<{
    /** Re-finger the instrument to exactly this pattern. */
    pressPattern(holes: ReadonlyArray<number>): void;
    /** Ask the engine to start the exam. */
    sendExam(): void;
    /** Final verdict observed. */
    finished(passed: boolean): void;
}>;

export type PlayerOptions = Readonly<{
    /** Delay between seeing a cue and re-fingering, ms. */
    reactionMs: number;
    /** Pause after the test phase begins before requesting the exam, ms. */
    examLeadMs: number;
    /** Hold time per note when performing the exam from memory, ms. */
    examNoteMs: number;
}>;

export const DEFAULT_PLAYER_OPTIONS: PlayerOptions = {
    reactionMs: 40,
    examLeadMs: 120,
    examNoteMs: 200,
};

const REST_PATTERN: ReadonlyArray<number> = [0, 0, 0, 0, 0, 0];

type Action = Readonly<{ due: number; run: () => void }>;

export class ScriptedPlayer {
    /** Distinct phases in arrival order. */
    readonly phases: string[] = [];
    /** Note degrees learned from cues, by note index. */
    readonly memory: number[] = [];
    private queue: Action[] = [];
    private examRequested = false;
    private done = false;

    constructor(
        private readonly chart: FingerChart,
        private readonly hooks: PlayerHooks,
        private readonly options: PlayerOptions = DEFAULT_PLAYER_OPTIONS,
    ) {}

    private schedule(due: number, run: () => void): void {
        this.queue.push({ due, run });
        this.queue.sort((a, b) => a.due - b.due);
    }

    private patternFor(degree: number): ReadonlyArray<number> {
        const pattern = this.chart[degree];
        if (pattern === undefined) {
            throw new RangeError(`no fingering known for degree ${degree}`);
        }
        return pattern;
    }

    /** Run every action that has come due. */
    tick(now: number): void {
        while (this.queue.length > 0 && this.queue[0].due <= now && !this.done) {
            const action = this.queue.shift();
            action?.run();
        }
    }

    onMessage(msg: EngineMessage, now: number): void {
        if (this.done) {
            return;
        }
        switch (msgString(msg, "type")) {
            case "phase_change": {
                const phase = msgString(msg, "phase") ?? "?";
                if (this.phases[this.phases.length - 1] !== phase) {
                    this.phases.push(phase);
                }
                if (phase === "hinted" || phase === "adaptive") {
                    // Lift all fingers at a pass boundary so the first note is
                    // always articulated by a fresh pattern change.
                    this.hooks.pressPattern(REST_PATTERN);
                } else if (phase === "test" && !this.examRequested) {
                    this.examRequested = true;
                    this.scheduleExam(now);
                }
                return;
            }
            case "cue": {
                const note = msgNumber(msg, "note");
                const pitch = msgNumber(msg, "pitch");
                if (note === null || pitch === null) {
                    return;
                }
                this.memory[note] = pitch;
                const phase = this.phases[this.phases.length - 1];
                if (phase === "hinted" || phase === "adaptive") {
                    const pattern = this.patternFor(pitch);
                    this.schedule(now + this.options.reactionMs, () =>
                        this.hooks.pressPattern(pattern),
                    );
                }
                return;
            }
            case "metrics": {
                const passed = msg["passed"];
                if (typeof passed === "boolean") {
                    this.done = true;
                    this.queue = [];
                    this.hooks.finished(passed);
                }
                return;
            }
            default:
                return;
        }
    }

    private scheduleExam(now: number): void {
        const { examLeadMs, examNoteMs } = this.options;
        this.schedule(now + examLeadMs, () => this.hooks.sendExam());
        // Perform from memory: hold each remembered pattern in note order.
        // No rest between notes — adjacent notes differ, so each switch is
        // one clean articulation and rests would read as extra notes.
        this.memory.forEach((degree, index) => {
            const pattern = this.patternFor(degree);
            this.schedule(now + examLeadMs + examNoteMs * (index + 1), () =>
                this.hooks.pressPattern(pattern),
            );
        });
    }
}
