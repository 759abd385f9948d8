/**
 * Outbound side of the practice channel.
 *
 * Sends are fire-and-forget; every key change also carries a sequence-
 * numbered ping whose echo both measures round-trip latency and exposes
 * drops (a gap in acked sequence numbers). The channel records everything
 * it sends with the client session clock, so a finished session leaves a
 * timeline that replays bytewise.
 */

import { ClientMessage, FrameValues, SCHEMA_VERSION, encodeMessage } from "./schema.js";
import { frameMessage } from "./frames.js";

/** Client session clock in milliseconds; must be monotone. */
export type Clock = () => number;

export type TimelineEntry = readonly [number, ClientMessage];

export class SessionChannel {
    /** Every sent message, stamped with the client clock (non-decreasing ints). */
    readonly timeline: TimelineEntry[] = [];
    private lastStamp = 0;
    private pingSeq = 0;

    constructor(
        private readonly post: (text: string) => void,
        private readonly clock: Clock,
    ) {}

    private send(msg: ClientMessage): void {
        this.lastStamp = Math.max(Math.round(this.clock()), this.lastStamp);
        this.timeline.push([this.lastStamp, msg]);
        this.post(encodeMessage(msg));
    }

    start(): void {
        this.send({ v: SCHEMA_VERSION, type: "start" });
    }

    stop(): void {
        this.send({ v: SCHEMA_VERSION, type: "stop" });
    }

    exam(): void {
        this.send({ v: SCHEMA_VERSION, type: "exam" });
    }

    overridePhase(phase: string): void {
        this.send({ v: SCHEMA_VERSION, type: "phase", phase });
    }

    frame(values: FrameValues): void {
        this.send(frameMessage(values));
    }

    /**
     * Key-change send: the new frame plus a latency ping stamped with the
     * client clock. Returns the ping's sequence number.
     */
    keyChange(values: FrameValues): number {
        this.frame(values);
        const seq = this.pingSeq++;
        this.send({ v: SCHEMA_VERSION, type: "ping", echo: { seq, sent: this.clock() } });
        return seq;
    }

    pingsSent(): number {
        return this.pingSeq;
    }
}
