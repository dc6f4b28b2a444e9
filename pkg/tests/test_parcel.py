"""Active messages: registry, local short-circuit, forwarding, transport faults."""

import time

import pytest

from amt_runtime import (
    AlreadyExistsError,
    NotFoundError,
    SignatureMismatchError,
    TransportError,
    UnknownActionError,
    service_gid,
    when_all,
)
from amt_runtime.bench import ACTION_CELL_ADD, ACTION_CELL_GET, ACTION_ECHO
from amt_runtime.objects import CounterCell
from amt_runtime.wire import fnv1a_64


def parcels_sent(rt):
    return rt.query_counter_value(f"/parcel/locality#{rt.locality_id}/sent/cumulative").value


class TestActionRegistry:
    def test_id_is_fnv_of_name(self, rt):
        aid = rt.register_action("test/some-action", ("i64",), lambda h, x: x)
        assert aid == fnv1a_64(b"test/some-action")

    def test_duplicate_name_rejected(self, rt):
        rt.register_action("test/dup", (), lambda h: None)
        with pytest.raises(AlreadyExistsError):
            rt.register_action("test/dup", (), lambda h: None)

    def test_lookup_by_name_and_id(self, rt):
        aid = rt.register_action("test/lookup", (), lambda h: "x")
        assert rt.actions.lookup("test/lookup").action_id == aid
        assert rt.actions.lookup(aid).name == "test/lookup"

    def test_unknown_action(self, rt):
        gid = rt.register_object(CounterCell())
        f = rt.apply(gid, "test/never-registered", [])
        with pytest.raises(UnknownActionError):
            f.get(timeout=5)


class TestApplyLocal:
    def test_local_apply_result(self, rt):
        gid = rt.register_object(CounterCell(0))
        assert rt.apply(gid, ACTION_CELL_ADD, [5]).get(timeout=5) == 5

    def test_local_apply_sends_zero_wire_frames(self, rt):
        gid = rt.register_object(CounterCell())
        before = parcels_sent(rt)
        when_all([rt.apply(gid, ACTION_CELL_ADD, [1]) for _ in range(50)], rt).get(timeout=10)
        assert parcels_sent(rt) == before

    def test_wrong_arity_no_parcel(self, rt):
        gid = rt.register_object(CounterCell())
        before = parcels_sent(rt)
        f = rt.apply(gid, ACTION_CELL_ADD, [1, 2])
        with pytest.raises(SignatureMismatchError):
            f.get(timeout=5)
        assert parcels_sent(rt) == before

    def test_wrong_type_rejected(self, rt):
        gid = rt.register_object(CounterCell())
        f = rt.apply(gid, ACTION_CELL_ADD, [1.5])
        with pytest.raises(SignatureMismatchError):
            f.get(timeout=5)

    def test_handler_error_surfaces(self, rt):
        def blow_up(_h):
            raise RuntimeError("handler exploded")

        rt.register_action("test/explode", (), blow_up)
        gid = rt.register_object(CounterCell())
        with pytest.raises(RuntimeError, match="exploded"):
            rt.apply(gid, "test/explode", []).get(timeout=5)


class TestApplyRemote:
    def test_hundred_remote_adds(self, cluster):
        rt0, rt1 = cluster(2)
        gid = rt0.register_object(CounterCell())
        when_all([rt1.apply(gid, ACTION_CELL_ADD, [1]) for _ in range(100)], rt1).get(timeout=30)
        assert rt0.apply(gid, ACTION_CELL_GET, []).get(timeout=5) == 100

    def test_remote_error_carries_type(self, cluster):
        rt0, rt1 = cluster(2)
        gid = rt0.register_object(CounterCell())
        f = rt1.apply(gid, "test/never-registered", [])
        with pytest.raises(UnknownActionError):
            f.get(timeout=10)

    def test_echo_round_trip_under_50ms(self, cluster):
        rt0, rt1 = cluster(2)
        rt1.apply(service_gid(0), ACTION_ECHO, [b"warm"]).get(timeout=10)
        t0 = time.perf_counter()
        assert rt1.apply(service_gid(0), ACTION_ECHO, [b"ping"]).get(timeout=10) == b"ping"
        assert time.perf_counter() - t0 < 0.050

    def test_locality_level_action(self, cluster):
        rt0, rt1 = cluster(2)
        assert rt0.apply(service_gid(1), ACTION_ECHO, [b"to-1"]).get(timeout=10) == b"to-1"


class TestForwarding:
    def test_stale_cache_forwards_once_and_repairs(self, cluster):
        rt0, rt1, rt2 = cluster(3)
        gid = rt0.register_object(CounterCell())
        # Warm locality 2's cache while the object lives on 0.
        rt2.apply(gid, ACTION_CELL_ADD, [1]).get(timeout=10)
        assert rt2.agas.cache_get(gid) == 0
        rt0.migrate(gid, 1).get(timeout=10)
        fwd_before = rt0.query_counter_value("/parcel/locality#0/forwarded/cumulative").value
        # Stale cache on 2 still points at 0: this parcel must be forwarded
        # exactly once and land on 1.
        assert rt2.apply(gid, ACTION_CELL_ADD, [1]).get(timeout=10) == 2
        fwd_after = rt0.query_counter_value("/parcel/locality#0/forwarded/cumulative").value
        assert fwd_after == fwd_before + 1
        deadline = time.time() + 5
        while rt2.agas.cache_get(gid) != 1 and time.time() < deadline:
            time.sleep(0.01)
        assert rt2.agas.cache_get(gid) == 1  # cache-repair notice arrived

    def test_unregistered_gid_reports_not_found_to_continuation(self, cluster):
        rt0, rt1 = cluster(2)
        gid = rt0.register_object(CounterCell())
        rt1.apply(gid, ACTION_CELL_ADD, [1]).get(timeout=10)  # warm cache on 1
        rt0.unregister(gid)
        with pytest.raises(NotFoundError):
            rt1.apply(gid, ACTION_CELL_ADD, [1]).get(timeout=10)


class TestOrdering:
    def test_pipelined_parcels_arrive_in_seq_order(self, cluster):
        rt0, rt1 = cluster(2)
        seen = []

        def record(_h, value):
            seen.append(value)
            return None

        rt0.register_action("test/record", ("i64",), record)
        rt1.register_action("test/record", ("i64",), record)
        n = 10_000
        futs = [rt1.apply(service_gid(0), "test/record", [i]) for i in range(n)]
        when_all(futs, rt1).get(timeout=60)
        # Handler tasks may interleave, but the wire itself is ordered:
        # verify via the per-source seq audit on received frames.
        assert sorted(seen) == list(range(n))

    def test_wire_seq_monotonic_per_source(self, cluster):
        rt0, rt1 = cluster(2)
        seqs = []
        original = rt0.port.on_frame

        def spy(peer, frame):
            from amt_runtime.wire import decode_parcel

            p = decode_parcel(frame)
            if p.source_locality == 1:
                seqs.append(p.seq_no)
            original(peer, frame)

        rt0.transport.on_frame = spy
        when_all([rt1.apply(service_gid(0), ACTION_ECHO, [b"x"]) for _ in range(500)], rt1).get(timeout=30)
        assert len(seqs) >= 500
        assert all(a < b for a, b in zip(seqs, seqs[1:]))


class TestTransportFaults:
    def test_kill_peer_fails_pending_futures(self, cluster):
        rt0, rt1 = cluster(2)
        stall = rt0.make_channel()
        gid0 = rt0.register_object(stall)
        # A recv on an empty channel parks the handler at locality 0 forever,
        # so the reply can never arrive before the kill.
        from amt_runtime.parcelport import ACT_CHANNEL_RECV

        pending = [rt1.port.apply_system(gid0, ACT_CHANNEL_RECV, []) for _ in range(5)]
        time.sleep(0.2)
        rt0.kill()
        t0 = time.perf_counter()
        for f in pending:
            with pytest.raises(TransportError):
                f.get(timeout=5)
        assert time.perf_counter() - t0 < 5

    def test_send_after_peer_down_is_immediate_error(self, cluster):
        rt0, rt1 = cluster(2)
        gid = rt0.register_object(CounterCell())
        rt1.apply(gid, ACTION_CELL_ADD, [1]).get(timeout=10)
        rt0.kill()
        time.sleep(0.2)
        with pytest.raises((TransportError, NotFoundError)):
            rt1.apply(gid, ACTION_CELL_ADD, [1]).get(timeout=10)


class TestParcelCounters:
    def test_sent_received_symmetry_at_quiescence(self, cluster):
        rt0, rt1 = cluster(2)
        gid = rt0.register_object(CounterCell())
        when_all([rt1.apply(gid, ACTION_CELL_ADD, [1]) for _ in range(20)], rt1).get(timeout=30)
        # Resolve the counter names up front (this itself crosses the wire),
        # then settle and sample each counter on its own locality so the
        # measurement adds no traffic between the snapshots.
        g_sent01 = rt0.resolve_name("/parcel/locality#0/sent-to#1/cumulative")
        g_recv10 = rt1.resolve_name("/parcel/locality#1/received-from#0/cumulative")
        g_sent10 = rt1.resolve_name("/parcel/locality#1/sent-to#0/cumulative")
        g_recv01 = rt0.resolve_name("/parcel/locality#0/received-from#1/cumulative")
        time.sleep(0.3)
        sent_0_to_1 = rt0.query_counter_value(g_sent01).value
        recv_1_from_0 = rt1.query_counter_value(g_recv10).value
        sent_1_to_0 = rt1.query_counter_value(g_sent10).value
        recv_0_from_1 = rt0.query_counter_value(g_recv01).value
        assert sent_0_to_1 == recv_1_from_0
        assert sent_1_to_0 == recv_0_from_1

    def test_bytes_sent_grows(self, cluster):
        rt0, rt1 = cluster(2)
        before = rt1.query_counter_value("/parcel/locality#1/bytes-sent/cumulative").value
        rt1.apply(service_gid(0), ACTION_ECHO, [b"x" * 100]).get(timeout=10)
        after = rt1.query_counter_value("/parcel/locality#1/bytes-sent/cumulative").value
        assert after >= before + 64 + 100
