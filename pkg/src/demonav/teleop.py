"""Tele-operation service: fixed-rate driving over a websocket.

The simulator ticks at a wall-clock rate with zero-order hold on the last
command, scores every step with the shared reward function, streams state
frames to all connected clients and records demonstration transitions on
demand. One simulation thread owns all session state; the network layer talks
to it only through a message queue in and per-client send callables out.
"""
import json
import queue
import threading
import time
from pathlib import Path

import numpy as np

from .assets import builtin_ui_dir
from .demos import save_demos
from .env import Action, EnvConfig, RobotEnv, Transition
from .geometry import WorldSpec

TICK_HZ = 10.0
RESUME_TIMEOUT = 60.0

CLIENT_MESSAGE_TYPES = ("cmd", "reset", "record", "save")


def validate_message(msg) -> str:
    """Shape-check one inbound message; returns an error string or ''."""
    if not isinstance(msg, dict) or "type" not in msg:
        return "message must be an object with a 'type' field"
    kind = msg["type"]
    if kind not in CLIENT_MESSAGE_TYPES:
        return f"unknown message type {kind!r}"
    if kind == "cmd":
        for field in ("lv", "av", "seq"):
            if field not in msg:
                return f"cmd message missing {field!r}"
        if not all(isinstance(msg[f], (int, float)) and not isinstance(msg[f], bool)
                   for f in ("lv", "av", "seq")):
            return "cmd fields lv, av, seq must be numbers"
    if kind == "record" and not isinstance(msg.get("on"), bool):
        return "record message needs boolean field 'on'"
    return ""


class TeleopSession:
    """Owns the environment, the held command and the demo recording."""

    def __init__(self, world: WorldSpec, env_config: EnvConfig, demo_out,
                 seed: int = 0, hz: float = TICK_HZ,
                 resume_timeout: float = RESUME_TIMEOUT):
        if hz <= 0:
            raise ValueError("hz must be > 0")
        self.world = world
        self.config = env_config
        self.demo_out = Path(demo_out)
        self.hz = float(hz)
        self.resume_timeout = float(resume_timeout)
        self.env = RobotEnv(world, env_config)
        self._seed_root = np.random.SeedSequence(seed)
        self._inbox: queue.Queue = queue.Queue()
        self._clients: list = []          # (send, is_driver)
        self._driver = None
        self._lock = threading.Lock()
        self._wake = threading.Event()
        self._stop = threading.Event()
        self._paused_since = time.monotonic()
        self._thread = None

        self._held = Action(0.0, 0.0)
        self._applied_seq = -1
        self._recording = False
        self._recorded: list[Transition] = []
        self._reset_requested = False
        self._episode = 0
        self._cumulative = 0.0
        self._obs = self.env.reset(self._next_episode_seed())

    def _next_episode_seed(self):
        return self._seed_root.spawn(1)[0]

    # -- network layer interface -------------------------------------------

    def attach(self, send) -> dict:
        """Register a client; the first live one becomes the driver."""
        with self._lock:
            if self._driver is None:
                role = "driver"
                self._driver = send
                self._applied_seq = -1
                idle = time.monotonic() - self._paused_since
                if idle > self.resume_timeout and self.env.steps_taken > 0:
                    self._reset_requested = True
            else:
                role = "spectator"
            self._clients.append((send, role == "driver"))
        self._wake.set()
        return {
            "type": "hello",
            "role": role,
            "world": self.world.name,
            "tick_hz": self.hz,
            "max_linear_speed": self.config.max_linear_speed,
            "min_linear_speed": self.config.min_linear_speed,
            "max_angular_speed": self.config.max_angular_speed,
            "recording": self._recording,
            "demo_count": len(self._recorded),
        }

    def detach(self, send) -> None:
        with self._lock:
            self._clients = [(s, d) for s, d in self._clients if s is not send]
            if self._driver is send:
                self._driver = None
                self._paused_since = time.monotonic()

    def submit(self, send, msg: dict) -> None:
        """Queue one validated message for the simulation thread."""
        self._inbox.put((send, msg))

    @property
    def paused(self) -> bool:
        return self._driver is None

    # -- simulation --------------------------------------------------------

    def _drain_inbox(self) -> None:
        while True:
            try:
                send, msg = self._inbox.get_nowait()
            except queue.Empty:
                return
            kind = msg["type"]
            if kind == "cmd":
                seq = int(msg["seq"])
                if seq <= self._applied_seq:
                    continue
                lv = float(np.clip(msg["lv"], 0.0, self.config.max_linear_speed))
                av = float(np.clip(msg["av"], -self.config.max_angular_speed,
                                   self.config.max_angular_speed))
                self._held = Action(lv, av)
                self._applied_seq = seq
            elif kind == "reset":
                self._reset_requested = True
            elif kind == "record":
                self._recording = msg["on"]
            elif kind == "save":
                save_demos(self.demo_out, self._recorded, self.world.name)
                self._reply(send, {"type": "saved",
                                   "count": len(self._recorded),
                                   "path": str(self.demo_out)})

    def _begin_episode(self) -> None:
        self._obs = self.env.reset(self._next_episode_seed())
        self._held = Action(0.0, 0.0)
        self._cumulative = 0.0
        self._episode += 1
        self._reset_requested = False

    def tick_once(self) -> dict:
        """Advance the simulation one step and return the emitted frame."""
        self._drain_inbox()
        if self._reset_requested:
            self._begin_episode()
        prev = self._obs
        res = self.env.step(self._held)
        self._obs = res.observation
        self._cumulative += res.reward
        if self._recording:
            self._recorded.append(Transition(
                s=prev, a=self._held, r=res.reward, s_next=res.observation,
                done=res.done and res.done_reason != "timeout", demo=True))
        frame = self._build_frame(res)
        if res.done:
            self._begin_episode()
        self._broadcast(frame)
        return frame

    def _build_frame(self, res) -> dict:
        pose = self.env.pose
        parts = res.reward_parts
        return {
            "type": "frame",
            "tick": self.env.steps_taken,
            "episode": self._episode,
            "pose": {"x": pose.x, "y": pose.y, "heading": pose.heading},
            "beams": [float(b) for b in self.env.raw_beams],
            "goal_distance": self.env.goal_distance,
            "goal_bearing": self.env.goal_bearing,
            "action": {"linear": self._held.linear, "angular": self._held.angular},
            "reward": res.reward,
            "reward_parts": {"progress": parts.progress, "collision": parts.collision,
                             "turn": parts.turn, "slow": parts.slow},
            "cumulative_reward": self._cumulative,
            "done": res.done,
            "reason": res.done_reason,
            "demo_count": len(self._recorded),
            "recording": self._recording,
        }

    def _reply(self, send, payload: dict) -> None:
        if send is None:
            return
        try:
            send(json.dumps(payload))
        except Exception:
            pass

    def _broadcast(self, payload: dict) -> None:
        text = json.dumps(payload)
        with self._lock:
            clients = [s for s, _ in self._clients]
        for send in clients:
            try:
                send(text)
            except Exception:
                pass

    # -- loop --------------------------------------------------------------

    def run(self) -> None:
        """Deadline-scheduled tick loop; paused whenever no driver is live."""
        k = 0
        anchor = time.monotonic()
        while not self._stop.is_set():
            if self.paused:
                self._wake.clear()
                self._wake.wait(timeout=0.2)
                anchor = time.monotonic()
                k = 0
                continue
            deadline = anchor + k / self.hz
            delay = deadline - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            self.tick_once()
            k += 1

    def start(self) -> None:
        self._thread = threading.Thread(target=self.run, daemon=True,
                                        name="teleop-sim")
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        self._wake.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)


# ---------------------------------------------------------------------------
# Network layer
# ---------------------------------------------------------------------------

def build_app(session: TeleopSession):
    import asyncio

    from fastapi import FastAPI, WebSocket, WebSocketDisconnect
    from fastapi.responses import RedirectResponse
    from fastapi.staticfiles import StaticFiles

    app = FastAPI(title="demonav teleop")
    ui_dir = builtin_ui_dir()
    if ui_dir.is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

        @app.get("/")
        async def root():
            return RedirectResponse("/ui/")

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        loop = asyncio.get_running_loop()
        outbox: asyncio.Queue = asyncio.Queue()

        def send(text: str) -> None:
            loop.call_soon_threadsafe(outbox.put_nowait, text)

        hello = session.attach(send)
        is_driver = hello["role"] == "driver"
        await ws.send_text(json.dumps(hello))

        async def pump():
            while True:
                await ws.send_text(await outbox.get())

        sender = asyncio.create_task(pump())
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await ws.send_text(json.dumps(
                        {"type": "error", "message": "invalid JSON"}))
                    continue
                problem = validate_message(msg)
                if problem:
                    await ws.send_text(json.dumps(
                        {"type": "error", "message": problem}))
                elif not is_driver:
                    await ws.send_text(json.dumps(
                        {"type": "error",
                         "message": "spectators cannot send commands"}))
                else:
                    session.submit(send, msg)
        except WebSocketDisconnect:
            pass
        finally:
            sender.cancel()
            session.detach(send)

    return app


def serve(world: WorldSpec, env_config: EnvConfig, host: str, port: int,
          demo_out, seed: int = 0, hz: float = TICK_HZ) -> None:
    """Run the service until interrupted; blocks the calling thread."""
    import uvicorn

    session = TeleopSession(world, env_config, demo_out, seed=seed, hz=hz)
    session.start()
    app = build_app(session)
    print(f"teleop service on ws://{host}:{port}/ws (world {world.name!r}, "
          f"{hz:g} Hz, demos -> {demo_out})")
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        session.stop()
