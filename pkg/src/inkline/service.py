"""Incremental recognition service.

HTTP handles session control (open/close, model listing, health); a
WebSocket per session streams strokes in and candidate lists out.  Messages
are processed strictly in order; every accepted message bumps the session
revision by exactly one, and every response carries the revision it reflects.

A session's predictions are a pure function of the checkpoint and the
ordered message list: the current character's stroke buffer is rasterized
and encoded on every stroke, while committed characters enter the decoder as
word embeddings only (their raw strokes are discarded on commit, so past
positions carry the zero-stroke glyph encoding).
"""

from __future__ import annotations

import itertools
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect

from . import nn
from .decoder import DstfnModel, TopKPrediction, top_k_from_probs
from .errors import InklineError, ValidationError
from .strokes import MAX_STROKES, Glyph, Stroke
from .training import load_model

MAX_HISTORY = 511  # history plus BOS stays within the 512-position table
TOP_K = 5


class RecognitionEngine:
    """Frozen models keyed by id; read-only, shared across sessions."""

    def __init__(self, models: dict[str, DstfnModel]):
        if not models:
            raise ValidationError("engine needs at least one model")
        self.models = models
        self.default_id = next(iter(models))
        self._empty = {mid: m.empty_glyph_vector() for mid, m in models.items()}

    def model_ids(self) -> list[str]:
        return list(self.models)

    def history_cap(self, model_id: str) -> int:
        return min(MAX_HISTORY, self.models[model_id].cfg.decoder.max_len - 1)

    def candidates(self, model_id: str, history: list[int],
                   buffer: list[Stroke]) -> TopKPrediction:
        model = self.models[model_id]
        glyph = Glyph(0, tuple(buffer))
        current = model.encode_glyph_batch(model.glyph_maps(glyph)[None]).data[0]
        vecs = np.tile(self._empty[model_id], (len(history) + 1, 1))
        vecs[-1] = current
        row = model.position_logits(history, nn.Tensor(vecs))
        if not np.isfinite(row).all():
            raise FloatingPointError("non-finite logits during recognition")
        probs = np.exp(row - row.max())
        probs /= probs.sum()
        return top_k_from_probs(probs, TOP_K)

    def vocab(self, model_id: str) -> int:
        return self.models[model_id].vocab


def build_engine(ckpt_path: str | Path, alphabet_dir: str | Path | None = None,
                 model_id: str | None = None) -> RecognitionEngine:
    model, meta = load_model(ckpt_path)
    if not isinstance(model, DstfnModel):
        raise ValidationError(
            f"serving requires the fused recognizer, got {meta['kind']}")
    return RecognitionEngine({model_id or meta["kind"]: model})


@dataclass
class Session:
    id: str
    model_id: str
    history: list[int] = field(default_factory=list)
    buffer: list[Stroke] = field(default_factory=list)
    rev: int = 0
    last_topk: TopKPrediction | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionHub:
    def __init__(self, engine: RecognitionEngine):
        self.engine = engine
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self._counter = itertools.count(1)

    def open(self, model_id: str | None) -> Session:
        mid = model_id or self.engine.default_id
        if mid not in self.engine.models:
            raise KeyError(mid)
        with self._lock:
            sid = f"s{next(self._counter)}"
            session = Session(id=sid, model_id=mid)
            self._sessions[sid] = session
        return session

    def get(self, sid: str) -> Session | None:
        with self._lock:
            return self._sessions.get(sid)

    def close(self, sid: str) -> bool:
        with self._lock:
            return self._sessions.pop(sid, None) is not None


def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _candidates_msg(session: Session, pred: TopKPrediction) -> str:
    return _dump({
        "t": "candidates",
        "rev": session.rev,
        "pos": len(session.history),
        "topk": [{"id": i, "p": p} for i, p in pred.entries],
    })


def _err(code: str, msg: str) -> str:
    return _dump({"t": "err", "code": code, "msg": msg})


def _parse_stroke(points) -> Stroke:
    if not isinstance(points, list) or not points:
        raise ValidationError("stroke needs a non-empty point list")
    pairs = []
    for p in points:
        if not isinstance(p, (list, tuple)) or len(p) != 2:
            raise ValidationError(f"bad point {p!r}")
        pairs.append((float(p[0]), float(p[1])))
    return Stroke.from_xy(pairs)


def handle_message(hub: SessionHub, session: Session, raw: str) -> list[str]:
    """Process one client message; returns the ordered replies.

    Accepted messages bump the revision by exactly one; rejected ones leave
    the session untouched.
    """
    engine = hub.engine
    try:
        msg = json.loads(raw)
    except json.JSONDecodeError:
        return [_err("VALIDATION", "message is not valid JSON")]
    if not isinstance(msg, dict) or "t" not in msg:
        return [_err("VALIDATION", "message needs a 't' field")]
    kind = msg["t"]
    with session.lock:
        try:
            if kind == "stroke":
                if len(session.buffer) >= MAX_STROKES:
                    return [_err("CAPACITY",
                                 f"character already has {MAX_STROKES} strokes")]
                stroke = _parse_stroke(msg.get("points"))
                session.buffer.append(stroke)
                session.rev += 1
                pred = engine.candidates(session.model_id, session.history,
                                         session.buffer)
                session.last_topk = pred
                return [_candidates_msg(session, pred)]
            if kind == "commit":
                symbol = msg.get("symbol")
                if symbol == "top1":
                    if session.last_topk is None:
                        session.last_topk = engine.candidates(
                            session.model_id, session.history, session.buffer)
                    symbol = session.last_topk.top1
                if not isinstance(symbol, int) or not \
                        0 <= symbol < engine.vocab(session.model_id):
                    return [_err("VALIDATION", f"bad symbol {symbol!r}")]
                cap = engine.history_cap(session.model_id)
                if len(session.history) >= cap:
                    return [_err("SESSION_FULL",
                                 f"history is capped at {cap} symbols")]
                session.history.append(symbol)
                session.buffer = []
                session.rev += 1
                ack = _dump({"t": "ack", "rev": session.rev})
                pred = engine.candidates(session.model_id, session.history, [])
                session.last_topk = pred
                return [ack, _candidates_msg(session, pred)]
            if kind == "amend":
                pos = msg.get("pos")
                symbol = msg.get("symbol")
                if not isinstance(pos, int) or not 0 <= pos < len(session.history):
                    return [_err("VALIDATION", f"position {pos!r} out of range")]
                if not isinstance(symbol, int) or not \
                        0 <= symbol < engine.vocab(session.model_id):
                    return [_err("VALIDATION", f"bad symbol {symbol!r}")]
                session.history[pos] = symbol
                session.rev += 1
                ack = _dump({"t": "ack", "rev": session.rev})
                pred = engine.candidates(session.model_id, session.history,
                                         session.buffer)
                session.last_topk = pred
                return [ack, _candidates_msg(session, pred)]
            return [_err("VALIDATION", f"unknown message type {kind!r}")]
        except ValidationError as exc:
            return [_err("VALIDATION", str(exc))]
        except InklineError as exc:
            return [_err("INTERNAL", str(exc))]


def create_app(engine: RecognitionEngine) -> FastAPI:
    app = FastAPI(title="inkline recognizer")
    hub = SessionHub(engine)
    app.state.hub = hub

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    @app.get("/models")
    def models():
        return {"models": engine.model_ids()}

    @app.post("/sessions", status_code=201)
    def open_session(body: dict | None = None):
        model_id = (body or {}).get("model")
        try:
            session = hub.open(model_id)
        except KeyError:
            raise HTTPException(status_code=404, detail={
                "code": "MODEL_NOT_FOUND", "msg": f"no model {model_id!r}"})
        return {"session": session.id, "model": session.model_id}

    @app.delete("/sessions/{sid}")
    def close_session(sid: str):
        if not hub.close(sid):
            raise HTTPException(status_code=404, detail={
                "code": "SESSION_NOT_FOUND", "msg": f"no session {sid!r}"})
        return {"closed": sid}

    @app.websocket("/sessions/{sid}/stream")
    async def stream(ws: WebSocket, sid: str):
        session = hub.get(sid)
        if session is None:
            await ws.close(code=4404)
            return
        await ws.accept()
        pred = engine.candidates(session.model_id, session.history, session.buffer)
        session.last_topk = pred
        await ws.send_text(_candidates_msg(session, pred))
        try:
            while True:
                raw = await ws.receive_text()
                for reply in handle_message(hub, session, raw):
                    await ws.send_text(reply)
        except WebSocketDisconnect:
            pass

    return app
