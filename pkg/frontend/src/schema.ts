/**
 * Practice-channel message schema, version 1.
 *
 * Every message is a flat JSON object carrying `v` and `type`; engine
 * messages also carry the session clock `t` in milliseconds. The encoder
 * emits canonical single-line JSON (sorted keys, no whitespace) so a
 * recorded message re-encodes to identical bytes on either end of the
 * channel.
 */

export const SCHEMA_VERSION = 1;

/** Six hole coverages, mouthpiece first; pressed = 1, released = 0. */
export type FrameValues = ReadonlyArray<number>;

export type ClientMessage =
    | Readonly<{ v: number; type: "start" }>
    | Readonly<{ v: number; type: "stop" }>
    | Readonly<{ v: number; type: "frame"; values: FrameValues }>
    | Readonly<{ v: number; type: "exam" }>
    | Readonly<{ v: number; type: "phase"; phase: string }>
    | Readonly<{ v: number; type: "ping"; echo: unknown }>;

/**
 * Engine messages are kept structurally loose: unknown versions and types
 * must surface as a banner, never as a crash, so narrowing happens field
 * by field at the point of use.
 */
export type EngineMessage = Readonly<Record<string, unknown>>;

export class ChannelFormatError extends Error {}

// ---------------------------------------------------------------------------
// Canonical JSON
// ---------------------------------------------------------------------------

const canonical = (value: unknown): string => {
    if (value === null || typeof value !== "object") {
        const text = JSON.stringify(value);
        if (text === undefined) {
            throw new ChannelFormatError(`unencodable value: ${String(value)}`);
        }
        return text;
    }
    if (Array.isArray(value)) {
        return `[${value.map(canonical).join(",")}]`;
    }
    const record = value as Record<string, unknown>;
    const body = Object.keys(record)
        .sort()
        .map((key) => `${JSON.stringify(key)}:${canonical(record[key])}`)
        .join(",");
    return `{${body}}`;
};

export const encodeMessage = (msg: ClientMessage): string => canonical(msg);

export const decodeMessage = (text: string): EngineMessage => {
    let parsed: unknown;
    try {
        parsed = JSON.parse(text);
    } catch (exc) {
        throw new ChannelFormatError(`bad channel line: ${String(exc)}`);
    }
    if (parsed === null || typeof parsed !== "object" || Array.isArray(parsed)) {
        throw new ChannelFormatError("channel messages must be JSON objects");
    }
    return parsed as EngineMessage;
};

// ---------------------------------------------------------------------------
// Field accessors for loosely typed engine messages
// ---------------------------------------------------------------------------

export const msgNumber = (msg: EngineMessage, field: string): number | null => {
    const value = msg[field];
    return typeof value === "number" && Number.isFinite(value) ? value : null;
};

export const msgString = (msg: EngineMessage, field: string): string | null => {
    const value = msg[field];
    return typeof value === "string" ? value : null;
};

export const msgNumberList = (msg: EngineMessage, field: string): number[] | null => {
    const value = msg[field];
    if (!Array.isArray(value) || value.some((v) => typeof v !== "number")) {
        return null;
    }
    return value as number[];
};

export const msgStringList = (msg: EngineMessage, field: string): string[] | null => {
    const value = msg[field];
    if (!Array.isArray(value) || value.some((v) => typeof v !== "string")) {
        return null;
    }
    return value as string[];
};
