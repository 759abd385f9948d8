/**
 * Headless practice session driver.
 *
 * Connects to a live engine over the websocket channel and plays a full
 * session with scripted keyboard input through the same tracker, channel,
 * and view reducer the browser app uses. On finish it writes a JSON record
 * of the run: phases visited, the raw verdict line, ping round-trip
 * latencies, and the complete client-stamped send timeline (the material a
 * headless replay needs).
 *
 * Usage:
 *   node dist/headless.js --url ws://127.0.0.1:8765/ws?score=song_a&method=dynamic \
 *     --chart chart.json --out run.json [--timeout-ms 90000]
 */

import { readFileSync, writeFileSync } from "node:fs";
import { performance } from "node:perf_hooks";
import process from "node:process";
import WebSocket from "ws";

import { SessionChannel } from "./channel.js";
import { DEFAULT_BINDING, FRAME_PERIOD_MS, KeyTracker } from "./frames.js";
import { DEFAULT_PLAYER_OPTIONS, FingerChart, ScriptedPlayer } from "./player.js";
import { decodeMessage, msgString } from "./schema.js";
import { applyMessage, connectionChanged, initialState, medianLatencyMs } from "./view.js";

type Args = Readonly<{ url: string; chart: string; out: string; timeoutMs: number }>;

const parseArgs = (argv: string[]): Args => {
    const flags = new Map<string, string>();
    for (let i = 0; i < argv.length; i += 2) {
        if (!argv[i].startsWith("--") || argv[i + 1] === undefined) {
            throw new RangeError(`cannot parse arguments near ${argv[i]}`);
        }
        flags.set(argv[i].slice(2), argv[i + 1]);
    }
    const url = flags.get("url");
    const chart = flags.get("chart");
    const out = flags.get("out");
    if (!url || !chart || !out) {
        throw new RangeError("required: --url --chart --out");
    }
    return { url, chart, out, timeoutMs: Number(flags.get("timeout-ms") ?? 90000) };
};

const main = (): void => {
    let args: Args;
    try {
        args = parseArgs(process.argv.slice(2));
    } catch (exc) {
        console.error(String(exc));
        process.exit(2);
    }
    const chart = JSON.parse(readFileSync(args.chart, "utf-8")) as FingerChart;

    const t0 = performance.now();
    const clock = () => performance.now() - t0;
    const tracker = new KeyTracker();
    let ui = initialState();
    const counts: Record<string, number> = {};
    let verdictRaw: string | null = null;
    let heartbeat: ReturnType<typeof setInterval> | null = null;
    let started = false;
    let finishing = false;

    const ws = new WebSocket(args.url);
    const channel = new SessionChannel((text) => ws.send(text), clock);

    const finalize = (code: number, note: string | null): void => {
        if (finishing) {
            return;
        }
        finishing = true;
        if (heartbeat !== null) {
            clearInterval(heartbeat);
        }
        const record = {
            note,
            phases: player.phases,
            verdictRaw,
            latenciesMs: ui.latenciesMs,
            medianLatencyMs: medianLatencyMs(ui.latenciesMs),
            counts,
            ui: {
                passed: ui.passed,
                phase: ui.phase,
                runState: ui.runState,
                passMistakes: ui.passMistakes,
                banner: ui.banner,
            },
            pingsSent: channel.pingsSent(),
            acksSeen: ui.latenciesMs.length,
            timeline: channel.timeline,
        };
        writeFileSync(args.out, JSON.stringify(record));
        ws.terminate();
        process.exit(code);
    };

    /** Re-finger to a pattern by pressing/releasing the bound keys. */
    const pressPattern = (holes: ReadonlyArray<number>): void => {
        let changed = false;
        holes.forEach((covered, finger) => {
            const moved = tracker.apply({ code: DEFAULT_BINDING[finger], down: covered >= 0.5 });
            changed = moved || changed;
        });
        if (changed) {
            channel.keyChange(tracker.values());
        }
    };

    const player = new ScriptedPlayer(
        chart,
        {
            pressPattern,
            sendExam: () => channel.exam(),
            finished: (passed) => finalize(passed ? 0 : 1, passed ? null : "exam failed"),
        },
        DEFAULT_PLAYER_OPTIONS,
    );

    const watchdog = setTimeout(() => finalize(3, "timed out"), args.timeoutMs);
    watchdog.unref();

    ws.on("open", () => {
        ui = connectionChanged(ui, "open");
    });
    ws.on("error", (exc) => {
        console.error(`socket error: ${String(exc)}`);
        finalize(4, `socket error: ${String(exc)}`);
    });
    ws.on("close", () => {
        if (!finishing) {
            finalize(4, "socket closed early");
        }
    });
    ws.on("message", (data) => {
        const raw = data.toString();
        const now = clock();
        let msg;
        try {
            msg = decodeMessage(raw);
        } catch (exc) {
            console.error(`unreadable line skipped: ${String(exc)}`);
            return;
        }
        const type = msgString(msg, "type") ?? "?";
        counts[type] = (counts[type] ?? 0) + 1;
        ui = applyMessage(ui, msg, now).state;
        if (type === "metrics" && typeof msg["passed"] === "boolean") {
            verdictRaw = raw;
        }
        if (type === "phase_change") {
            console.error(`phase ${msgString(msg, "phase")} at ${Math.round(now)}ms`);
        }
        player.onMessage(msg, now);
        if (type === "snapshot" && !started) {
            started = true;
            channel.start();
            heartbeat = setInterval(() => {
                const tickNow = clock();
                player.tick(tickNow);
                channel.frame(tracker.values());
            }, FRAME_PERIOD_MS);
        }
    });
};

main();
