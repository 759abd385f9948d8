import { describe, expect, it } from "vitest";

import {
    ChannelFormatError,
    SCHEMA_VERSION,
    decodeMessage,
    encodeMessage,
    msgNumber,
    msgNumberList,
    msgString,
    msgStringList,
} from "../src/schema.js";

describe("canonical encoding", () => {
    it("sorts keys and drops whitespace", () => {
        expect(encodeMessage({ v: 1, type: "start" })).toBe('{"type":"start","v":1}');
        expect(encodeMessage({ v: 1, type: "frame", values: [1, 0, 1, 0, 0, 0] })).toBe(
            '{"type":"frame","v":1,"values":[1,0,1,0,0,0]}',
        );
    });

    it("sorts nested objects too", () => {
        expect(encodeMessage({ v: 1, type: "ping", echo: { seq: 2, sent: 5 } })).toBe(
            '{"echo":{"sent":5,"seq":2},"type":"ping","v":1}',
        );
    });

    it("round-trips through decode", () => {
        const text = encodeMessage({ v: SCHEMA_VERSION, type: "phase", phase: "hinted" });
        expect(decodeMessage(text)).toEqual({ v: 1, type: "phase", phase: "hinted" });
    });
});

describe("decodeMessage", () => {
    it("rejects non-JSON", () => {
        expect(() => decodeMessage("{nope")).toThrow(ChannelFormatError);
    });

    it("rejects non-objects", () => {
        expect(() => decodeMessage("[1,2]")).toThrow(ChannelFormatError);
        expect(() => decodeMessage('"hi"')).toThrow(ChannelFormatError);
    });
});

describe("field accessors", () => {
    const msg = { t: 12, phase: "test", fingers: [1, 3], targets: ["detached"] };

    it("narrow by runtime type", () => {
        expect(msgNumber(msg, "t")).toBe(12);
        expect(msgNumber(msg, "phase")).toBeNull();
        expect(msgString(msg, "phase")).toBe("test");
        expect(msgNumberList(msg, "fingers")).toEqual([1, 3]);
        expect(msgNumberList(msg, "targets")).toBeNull();
        expect(msgStringList(msg, "targets")).toEqual(["detached"]);
        expect(msgStringList(msg, "missing")).toBeNull();
    });
});
