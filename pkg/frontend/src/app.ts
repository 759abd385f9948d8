/**
 * Browser practice app.
 *
 * A virtual six-hole flute played on the keyboard: six home-row keys cover
 * the six holes, the engine's guidance comes back as cues, hints, clutch
 * states, and mistakes, and everything rendered is engine-reported state
 * folded through the view reducer. Connects to the engine given by the
 * `engine` query parameter (default 127.0.0.1:8765).
 */

import { fromEvent, interval, merge } from "rxjs";
import { filter, map, take, toArray } from "rxjs/operators";

import { SessionChannel } from "./channel.js";
import { FRAME_PERIOD_MS, HOLE_COUNT, KeyEdge, KeyTracker } from "./frames.js";
import { decodeMessage } from "./schema.js";
import {
    UiState,
    applyMessage,
    connectionChanged,
    degreeToHz,
    initialState,
    isFingerLit,
    isNoteLit,
    medianLatencyMs,
    rebound,
} from "./view.js";

const params = new URLSearchParams(location.search);
const engine = params.get("engine") ?? "127.0.0.1:8765";
const scoreId = params.get("score") ?? "song_a";
const method = params.get("method") ?? "dynamic";

// ---------------------------------------------------------------------------
// Static page skeleton
// ---------------------------------------------------------------------------

const root = document.querySelector("#app");
if (root === null) {
    throw new Error("missing #app element");
}
root.innerHTML = `
  <header>
    <span id="conn">connecting</span>
    <span id="phase">-</span>
    <span id="session"></span>
  </header>
  <div id="banner" hidden></div>
  <div id="fingers"></div>
  <ol id="lane"></ol>
  <p id="metrics"></p>
  <nav>
    <button id="start">start</button>
    <button id="exam" disabled>exam</button>
    <button id="stop">stop</button>
    <button id="remap">remap keys</button>
  </nav>
`;
const el = (id: string): HTMLElement => {
    const found = document.getElementById(id);
    if (found === null) {
        throw new Error(`missing #${id}`);
    }
    return found;
};
const fingerTiles: HTMLElement[] = [];
for (let finger = 0; finger < HOLE_COUNT; finger += 1) {
    const tile = document.createElement("div");
    tile.className = "finger";
    el("fingers").appendChild(tile);
    fingerTiles.push(tile);
}

// ---------------------------------------------------------------------------
// Session plumbing
// ---------------------------------------------------------------------------

const t0 = performance.now();
const clock = () => performance.now() - t0;
let lastMessageAt = 0;

const tracker = new KeyTracker();
let ui: UiState = initialState();

const socket = new WebSocket(
    `ws://${engine}/ws?score=${encodeURIComponent(scoreId)}&method=${encodeURIComponent(method)}`,
);
const channel = new SessionChannel((text) => socket.send(text), clock);

const accepting = (): boolean =>
    ui.connection === "open" && (ui.runState === "running" || ui.runState === "exam");

// Simple engine-pitch audio: one short sine per cue.
let audio: AudioContext | null = null;
const playTone = (degree: number): void => {
    try {
        audio = audio ?? new AudioContext();
        const osc = audio.createOscillator();
        const gain = audio.createGain();
        osc.frequency.value = degreeToHz(degree);
        gain.gain.setValueAtTime(0.2, audio.currentTime);
        gain.gain.exponentialRampToValueAtTime(0.001, audio.currentTime + 0.2);
        osc.connect(gain).connect(audio.destination);
        osc.start();
        osc.stop(audio.currentTime + 0.2);
    } catch {
        // Audio is best-effort; some browsers refuse before a user gesture.
    }
};

// ---------------------------------------------------------------------------
// Render
// ---------------------------------------------------------------------------

const render = (): void => {
    // Engine clock interpolated forward so 60 ms hint pulses decay visibly
    // even when the engine has nothing new to say.
    const engineNow = ui.engineNow + Math.max(clock() - lastMessageAt, 0);
    el("conn").textContent = ui.connection;
    el("phase").textContent = `${ui.phase ?? "-"} · ${ui.runState} · pass ${ui.passIndex}`;
    el("session").textContent = ui.session ? `${ui.scoreId} (${ui.method})` : "";
    const banner = el("banner");
    banner.hidden = ui.banner === null;
    banner.textContent = ui.banner ?? "";
    const held = tracker.values();
    fingerTiles.forEach((tile, finger) => {
        tile.textContent = `${ui.binding[finger].replace("Key", "")} ${ui.clutch[finger]}`;
        tile.classList.toggle("lit", isFingerLit(ui, finger, engineNow));
        tile.classList.toggle("locked", ui.clutch[finger] !== "detached");
        tile.classList.toggle("held", held[finger] === 1);
    });
    const lane = el("lane");
    lane.innerHTML = "";
    for (const entry of ui.lane) {
        const item = document.createElement("li");
        item.textContent = `note ${entry.note} · pitch ${entry.pitch}`;
        item.classList.toggle("missed", isNoteLit(ui, entry.note, engineNow));
        lane.appendChild(item);
    }
    if (ui.notesRemaining > 0) {
        const rest = document.createElement("li");
        rest.textContent = `+${ui.notesRemaining} upcoming`;
        lane.appendChild(rest);
    }
    const median = medianLatencyMs(ui.latenciesMs);
    el("metrics").textContent =
        `mistakes ${ui.passMistakes} · passed ${ui.passed ?? "-"} · ` +
        `rate ${ui.rate ?? "-"} · key round trip ${median === null ? "-" : median.toFixed(1)} ms`;
    (el("exam") as HTMLButtonElement).disabled = !(ui.phase === "test" && accepting());
};

// ---------------------------------------------------------------------------
// Streams
// ---------------------------------------------------------------------------

fromEvent(socket, "open").subscribe(() => {
    ui = connectionChanged(ui, "open");
    render();
});
merge(fromEvent(socket, "close"), fromEvent(socket, "error")).subscribe(() => {
    ui = connectionChanged(ui, "closed");
    render();
});
fromEvent<MessageEvent>(socket, "message").subscribe((event) => {
    let msg;
    try {
        msg = decodeMessage(String(event.data));
    } catch {
        return;
    }
    lastMessageAt = clock();
    const update = applyMessage(ui, msg, lastMessageAt);
    ui = update.state;
    update.tones.forEach(playTone);
    render();
});

const edges$ = merge(
    fromEvent<KeyboardEvent>(document, "keydown").pipe(
        filter((event) => !event.repeat),
        map((event): KeyEdge => ({ code: event.code, down: true })),
    ),
    fromEvent<KeyboardEvent>(document, "keyup").pipe(
        map((event): KeyEdge => ({ code: event.code, down: false })),
    ),
);
edges$.subscribe((edge) => {
    if (tracker.apply(edge) && accepting()) {
        channel.keyChange(tracker.values());
    }
    render();
});

interval(FRAME_PERIOD_MS).subscribe(() => {
    if (accepting()) {
        channel.frame(tracker.values());
    }
});
interval(50).subscribe(render);

fromEvent(el("start"), "click").subscribe(() => channel.start());
fromEvent(el("exam"), "click").subscribe(() => channel.exam());
fromEvent(el("stop"), "click").subscribe(() => channel.stop());
fromEvent(el("remap"), "click").subscribe(() => {
    el("banner").hidden = false;
    el("banner").textContent = "remap: press six keys, mouthpiece finger first";
    fromEvent<KeyboardEvent>(document, "keydown")
        .pipe(
            map((event) => event.code),
            take(HOLE_COUNT),
            toArray(),
        )
        .subscribe((codes) => {
            try {
                tracker.rebind(codes);
                ui = rebound(ui, codes);
            } catch (exc) {
                ui = { ...ui, banner: String(exc) };
            }
            render();
        });
});

render();
