import copy
import math
import time

import pytest
from fastapi.testclient import TestClient

from vlmnav.runlog import read_runlog
from vlmnav.scenario import parse_scenario
from vlmnav.service import build_app
from vlmnav.simulate import replay_commands, run_scenario

from test_simulate import SHORT_CORRIDOR


def fast_scenario(**overrides):
    doc = copy.deepcopy(SHORT_CORRIDOR)
    doc["tick_rate"] = 50.0
    doc["tick_limit"] = 100000
    doc.update(overrides)
    return parse_scenario(doc)


def wait_for(ws, msg_type, limit=200):
    for _ in range(limit):
        msg = ws.receive_json()
        if msg["type"] == msg_type:
            return msg
    raise AssertionError(f"no {msg_type} message within {limit} messages")


class TestProtocol:
    def test_world_static_then_states(self):
        app = build_app(fast_scenario(), mode="teleop")
        with TestClient(app) as client:
            with client.websocket_connect("/ws") as ws:
                first = ws.receive_json()
                assert first["type"] == "world_static"
                assert first["v"] == 1
                payload = first["payload"]
                assert payload["terrain"][0]["class"] == "indoor_floor"
                assert payload["v_max"] == pytest.approx(0.3)
                assert len(payload["obstacles"]) == 2
                state = wait_for(ws, "state")
                assert state["payload"]["mode"] == "teleop"
                assert len(state["payload"]["pose"]) == 3

    def test_idle_teleop_robot_stays_put(self):
        app = build_app(fast_scenario(), mode="teleop")
        with TestClient(app) as client:
            with client.websocket_connect("/ws") as ws:
                wait_for(ws, "world_static", limit=5)
                first = wait_for(ws, "state")
                time.sleep(0.2)
                later = wait_for(ws, "state")
                assert later["tick"] > first["tick"]
                assert later["payload"]["pose"] == first["payload"]["pose"]

    def test_teleop_command_moves_robot(self):
        app = build_app(fast_scenario(), mode="teleop")
        with TestClient(app) as client:
            with client.websocket_connect("/ws") as ws:
                wait_for(ws, "world_static", limit=5)
                ws.send_json({"type": "teleop_cmd", "payload": {"v": 0.3, "omega": 0.0}})
                deadline = time.time() + 3.0
                moved = False
                while time.time() < deadline:
                    state = wait_for(ws, "state")
                    if state["payload"]["pose"][0] > 0.05:
                        moved = True
                        break
                assert moved

    def test_teleop_commands_clamped(self):
        app = build_app(fast_scenario(), mode="teleop")
        with TestClient(app) as client:
            with client.websocket_connect("/ws") as ws:
                wait_for(ws, "world_static", limit=5)
                ws.send_json({"type": "teleop_cmd", "payload": {"v": 50.0, "omega": -90.0}})
                time.sleep(0.3)
                service = app.state.service
                assert service.teleop_cmd[0] <= 0.3
                assert service.teleop_cmd[1] >= -1.0

    def test_view_only_second_client(self):
        app = build_app(fast_scenario(), mode="teleop")
        with TestClient(app) as client:
            with client.websocket_connect("/ws") as driver:
                wait_for(driver, "world_static", limit=5)
                with client.websocket_connect("/ws") as viewer:
                    wait_for(viewer, "world_static", limit=5)
                    viewer.send_json(
                        {"type": "teleop_cmd", "payload": {"v": 0.3, "omega": 0.0}}
                    )
                    time.sleep(0.3)
                    assert app.state.service.teleop_cmd == (0.0, 0.0)

    def test_mode_switch_to_autonomous(self):
        app = build_app(fast_scenario(), mode="teleop")
        with TestClient(app) as client:
            with client.websocket_connect("/ws") as ws:
                wait_for(ws, "world_static", limit=5)
                ws.send_json({"type": "mode", "payload": {"mode": "autonomous"}})
                deadline = time.time() + 5.0
                moved = False
                while time.time() < deadline:
                    state = wait_for(ws, "state")
                    if (
                        state["payload"]["mode"] == "autonomous"
                        and state["payload"]["pose"][0] > 0.05
                    ):
                        moved = True
                        break
                assert moved


class TestRecording:
    def test_record_round_trip_replayable(self, tmp_path):
        scenario = fast_scenario()
        app = build_app(scenario, mode="teleop", out_dir=str(tmp_path))
        with TestClient(app) as client:
            with client.websocket_connect("/ws") as ws:
                wait_for(ws, "world_static", limit=5)
                ws.send_json({"type": "record_start"})
                wait_for(ws, "record_started")
                ws.send_json({"type": "teleop_cmd", "payload": {"v": 0.3, "omega": 0.2}})
                time.sleep(0.6)
                ws.send_json({"type": "teleop_cmd", "payload": {"v": 0.2, "omega": -0.3}})
                time.sleep(0.6)
                ws.send_json({"type": "record_stop"})
                saved = wait_for(ws, "record_saved")
                log_path = saved["payload"]["path"]
        log = read_runlog(log_path)
        assert log.header["source"] == "teleop"
        assert len(log.records) > 10
        # replay from the recorded start state reproduces poses exactly
        from dataclasses import replace

        from vlmnav.geometry import Pose2D

        start_pose = log.header["start_pose"]
        extra = log.header["extra"]
        robot = replace(
            scenario.robot,
            pose=Pose2D(*start_pose),
            v=extra["start_v"],
            omega=extra["start_omega"],
        )
        replay_scenario = replace(scenario, robot=robot)
        replayed = replay_commands(replay_scenario, log.commands)
        assert replayed == [tuple(p) for p in log.poses]

    def test_stop_without_start_is_noop(self, tmp_path):
        app = build_app(fast_scenario(), mode="teleop", out_dir=str(tmp_path))
        with TestClient(app) as client:
            with client.websocket_connect("/ws") as ws:
                wait_for(ws, "world_static", limit=5)
                ws.send_json({"type": "record_stop"})
                notice = wait_for(ws, "notice")
                assert "not recording" in notice["payload"]["text"]

    def test_disconnect_mid_recording_finalizes(self, tmp_path):
        app = build_app(fast_scenario(), mode="teleop", out_dir=str(tmp_path))
        with TestClient(app) as client:
            with client.websocket_connect("/ws") as ws:
                wait_for(ws, "world_static", limit=5)
                ws.send_json({"type": "record_start"})
                wait_for(ws, "record_started")
                time.sleep(0.3)
            time.sleep(0.3)
            service = app.state.service
            assert not service.recording
            assert len(service.saved_logs) == 1
            log = read_runlog(service.saved_logs[0])
            assert len(log.records) > 0


class TestStatelessness:
    def test_client_churn_does_not_disturb_autonomous_run(self):
        scenario = fast_scenario()
        app = build_app(scenario, mode="autonomous")
        # reference poses from a direct headless run of the same scenario
        reference = run_scenario(scenario)
        ref_poses = {rec.tick: rec.pose for rec in reference.records}
        seen: dict[int, tuple] = {}
        with TestClient(app) as client:
            for _ in range(3):  # connect, read, drop, reconnect
                with client.websocket_connect("/ws") as ws:
                    wait_for(ws, "world_static", limit=5)
                    for _ in range(8):
                        state = wait_for(ws, "state")
                        seen[state["tick"]] = tuple(state["payload"]["pose"])
                time.sleep(0.1)
        matched = 0
        for tick, pose in seen.items():
            if tick in ref_poses:
                assert pose == pytest.approx(ref_poses[tick], abs=1e-9)
                matched += 1
        assert matched >= 10
