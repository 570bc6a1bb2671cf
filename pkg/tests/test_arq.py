import random

from hypothesis import given, settings
from hypothesis import strategies as st

from srwin.arq import ArqReceiver, ArqSender
from srwin.channel import Channel, ChannelConfig


def test_fresh_sender_emits_seq0():
    tx = ArqSender(4, 4)
    unit = tx.on_slot(0)
    assert unit.seq == 0 and unit.tx == 1
    assert list(tx.outstanding) == [0]


def test_lossless_steady_state_one_new_packet_per_slot():
    W = R = 8
    tx = ArqSender(W, R)
    rx = ArqReceiver()
    ch = Channel(ChannelConfig(0.0, R, 0))
    seqs = []
    for s in range(100):
        for u in ch.poll_forward(s):
            ch.send_feedback(s, rx.on_packet(u.seq, s).ack)
        for a in ch.poll_feedback(s):
            tx.on_ack(a.seq)
        unit = tx.on_slot(s)
        ch.send_forward(s, unit)
        seqs.append(unit.seq)
        assert len(tx.outstanding) == min(W, s + 1)
        assert rx.occupancy == 0
    assert seqs == list(range(100))


def test_sender_idle_when_window_full():
    tx = ArqSender(2, 10)
    assert tx.on_slot(0) is not None
    assert tx.on_slot(1) is not None
    assert tx.on_slot(2) is None


def test_timer_fires_one_rtt_after_send():
    R = 6
    tx = ArqSender(1, R)
    tx.on_slot(0)
    for s in range(1, R):
        assert tx.on_slot(s) is None
    again = tx.on_slot(R)
    assert again.seq == 0 and again.tx == 2


def test_timed_out_seq_resent_before_new_ones():
    tx = ArqSender(4, 3)
    for s in range(3):
        tx.on_slot(s)
    tx.on_ack(1)
    tx.on_ack(2)
    unit = tx.on_slot(3)  # seq 0's timer is due
    assert (unit.seq, unit.tx) == (0, 2)
    assert tx.on_slot(4).seq == 3


def test_ack_sole_outstanding():
    tx = ArqSender(4, 4)
    tx.on_slot(0)
    tx.on_ack(0)
    assert tx.outstanding == {}


def test_duplicate_ack_is_ignored():
    tx = ArqSender(4, 4)
    tx.on_slot(0)
    tx.on_slot(1)
    tx.on_ack(0)
    before = {k: list(v) for k, v in tx.outstanding.items()}
    tx.on_ack(0)
    tx.on_ack(99)
    assert tx.outstanding == before


def test_ack_out_of_order_leaves_others():
    tx = ArqSender(8, 20)
    for s in range(6):
        tx.on_slot(s)
    tx.on_ack(0)
    tx.on_ack(1)
    tx.on_ack(2)
    tx.on_ack(5)
    assert sorted(tx.outstanding) == [3, 4]


def test_receiver_in_order():
    rx = ArqReceiver()
    for s in range(3):
        r = rx.on_packet(s, s)
        assert r.ack.seq == s
        assert [q for q, _ in r.delivered] == [s]
        assert rx.occupancy == 0


def test_receiver_reorders():
    rx = ArqReceiver()
    assert rx.on_packet(1, 0).delivered == []
    assert rx.on_packet(2, 1).delivered == []
    assert rx.occupancy == 2
    r = rx.on_packet(0, 5)
    assert [q for q, _ in r.delivered] == [0, 1, 2]
    assert rx.occupancy == 0


def test_head_loss_buffers_followers():
    k = 7
    rx = ArqReceiver()
    for q in range(1, k + 1):
        rx.on_packet(q, q)
    assert rx.occupancy == k
    r = rx.on_packet(0, 20)
    assert len(r.delivered) == k + 1
    assert rx.occupancy == 0


def test_duplicate_packet_reacked_not_rebuffered():
    rx = ArqReceiver()
    rx.on_packet(3, 0)
    r = rx.on_packet(3, 1)
    assert r.duplicate and r.ack.seq == 3 and rx.occupancy == 1
    rx.on_packet(0, 2)
    r = rx.on_packet(0, 3)
    assert r.duplicate and r.delivered == []


def _drive(W, R, p, p_a, seed, slots):
    ch = Channel(ChannelConfig(p, R, seed, p_a))
    tx = ArqSender(W, R)
    rx = ArqReceiver()
    delivered = []
    for s in range(slots):
        for u in ch.poll_forward(s):
            r = rx.on_packet(u.seq, s)
            delivered += [q for q, _ in r.delivered]
            assert rx.next_expected not in rx.buffer
            assert all(q > rx.next_expected for q in rx.buffer)
            ch.send_feedback(s, r.ack)
        for a in ch.poll_feedback(s):
            tx.on_ack(a.seq)
        u = tx.on_slot(s)
        assert len(tx.outstanding) <= W
        if u is not None:
            ch.send_forward(s, u)
    return delivered, tx


@settings(max_examples=40, deadline=None)
@given(
    W=st.integers(1, 16),
    extra=st.integers(0, 5),
    p=st.floats(0.0, 0.6),
    p_a=st.floats(0.0, 0.6),
    seed=st.integers(0, 2**32),
)
def test_reliable_in_order_stream(W, extra, p, p_a, seed):
    delivered, _ = _drive(W, W + extra, p, p_a, seed, 600)
    assert delivered == list(range(len(delivered)))


def test_outstanding_span_can_exceed_window():
    # a packet stuck on retransmissions lets later seqs run ahead of it
    rng = random.Random(1)
    widest = 0
    for seed in (rng.randrange(2**32) for _ in range(5)):
        ch = Channel(ChannelConfig(0.5, 4, seed))
        tx, rx = ArqSender(4, 4), ArqReceiver()
        for s in range(400):
            for u in ch.poll_forward(s):
                ch.send_feedback(s, rx.on_packet(u.seq, s).ack)
            for a in ch.poll_feedback(s):
                tx.on_ack(a.seq)
            u = tx.on_slot(s)
            if u is not None:
                ch.send_forward(s, u)
            if tx.outstanding:
                widest = max(widest, max(tx.outstanding) - min(tx.outstanding) + 1)
    assert widest > 4
