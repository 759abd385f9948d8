"""Websocket transport for the practice channel (requires the 'serve'
extra). Kept separate from the session logic — and free of postponed
annotation evaluation — so the framework can introspect the endpoint
signature.
"""

import asyncio
import time
from typing import Mapping, Optional, Sequence

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .config import EngineConfig
from .score import Score
from .service import (
    SCHEMA_VERSION,
    ServiceError,
    SessionState,
    create_session,
    decode_message,
    encode_message,
)


def build_app(config: EngineConfig, scores: Optional[Mapping[str, Score]] = None) -> FastAPI:
    app = FastAPI(title="haptic flute practice service")
    counter = {"n": 0}

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket) -> None:
        await websocket.accept()
        params = websocket.query_params
        counter["n"] += 1
        try:
            session = create_session(
                params.get("score", "song_a"),
                params.get("method", "dynamic"),
                config,
                session_id=f"s{counter['n']}",
                scores=scores,
            )
        except ServiceError as exc:
            await websocket.send_text(
                encode_message({"v": SCHEMA_VERSION, "type": "error", "t": 0, "reason": str(exc)})
            )
            await websocket.close()
            return
        start = time.monotonic()
        lock = asyncio.Lock()

        def now_ms() -> int:
            return int((time.monotonic() - start) * 1000)

        async def send_all(msgs: Sequence[Mapping]) -> None:
            for m in msgs:
                await websocket.send_text(encode_message(m))

        await websocket.send_text(encode_message(session.snapshot(now_ms())))

        async def heartbeat() -> None:
            while session.state is not SessionState.DONE:
                await asyncio.sleep(0.02)
                async with lock:
                    msgs = session.pump([], now_ms())
                await send_all(msgs)

        beat = asyncio.create_task(heartbeat())
        try:
            while True:
                text = await websocket.receive_text()
                try:
                    msg = decode_message(text)
                except ServiceError as exc:
                    await send_all(
                        [{"v": SCHEMA_VERSION, "type": "error", "t": now_ms(), "reason": str(exc)}]
                    )
                    continue
                async with lock:
                    msgs = session.pump([msg], now_ms())
                await send_all(msgs)
        except WebSocketDisconnect:
            pass
        finally:
            beat.cancel()

    return app
