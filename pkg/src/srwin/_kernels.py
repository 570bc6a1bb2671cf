"""Compiled slot loops for long runs.

Each kernel reproduces the reference engine slot for slot: same event order
within a slot, same random draws from the same generators, same timer and
credit rules. ``tests/test_engine_equivalence.py`` holds the two to
bit-identical reports.

Both pipes carry at most one unit per slot (one send per slot, one ACK per
arrival) with a fixed delay, so they are rings of length delay + 1.
"""

from __future__ import annotations

import numpy as np
from numba import njit

OK = 0
ERR_SENDER_RING = 1
ERR_RECEIVER_RING = 2
ERR_TX_OVERFLOW = 3
ERR_ORDER = 4
ERR_WINDOW = 5

_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _C1
    z = (z ^ (z >> _S27)) * _C2
    return z ^ (z >> _S31)


@njit(cache=True)
def mask_from64(key, block_seq, tx_index, low_bits):
    h = mix64(key ^ mix64(np.uint64(block_seq)))
    h = mix64(h ^ mix64(np.uint64(tx_index) + _GOLDEN))
    return mix64(h + _GOLDEN) & low_bits


@njit(cache=True)
def _lost(rng, p):
    return p > 0.0 and rng.random() < p


@njit(cache=True)
def _ack_lost(rng, p_a, copies):
    if p_a <= 0.0:
        return False
    lost = True
    for _ in range(copies):
        if rng.random() >= p_a:
            lost = False
    return lost


@njit(cache=True)
def arq_kernel(W, R, df, p, p_a, copies, horizon, warmup, fwd_rng, fb_rng, cap):
    """Returns (stats int64[10], transmissions used by each delivered seq)."""
    db = R - df
    lf = df + 1
    lb = db + 1
    lt = R + 1
    mask = cap - 1

    f_seq = np.full(lf, -1, np.int64)
    f_tx = np.zeros(lf, np.int64)
    f_lost = np.zeros(lf, np.bool_)
    b_seq = np.full(lb, -1, np.int64)
    b_lost = np.zeros(lb, np.bool_)
    t_seq = np.full(lt, -1, np.int64)

    s_seq = np.full(cap, -1, np.int64)
    s_state = np.zeros(cap, np.int8)  # 0 idle, 1 in flight, 2 awaiting resend
    s_tx = np.zeros(cap, np.int64)
    s_last = np.full(cap, -1, np.int64)
    rq = np.zeros(W + 1, np.int64)
    rq_head = 0
    rq_len = 0
    outstanding = 0
    next_seq = 0

    r_present = np.zeros(cap, np.bool_)
    r_arrival = np.zeros(cap, np.int64)
    next_expected = 0
    occupancy = 0
    tx_first = np.zeros(horizon + 1, np.uint16)

    measuring = False
    ws = -1
    ne_at_ws = 0
    occ_sum = 0
    delivered_meas = 0
    delay_sum = 0
    wasted = 0
    sends = 0
    err = OK

    for s in range(horizon):
        if not measuring:
            if warmup >= 0:
                start = s >= warmup
            else:
                start = s >= 10 * R and next_expected >= 10 * W
            if start:
                measuring = True
                ws = s
                ne_at_ws = next_expected

        # forward arrival
        fi = s % lf
        seq = f_seq[fi]
        bi = s % lb
        b_seq[bi] = -1
        if seq >= 0 and s - df >= 0:
            if not f_lost[fi]:
                b_seq[bi] = seq
                b_lost[bi] = _ack_lost(fb_rng, p_a, copies)
                if seq < next_expected or (
                    r_present[seq & mask] and seq - next_expected < cap
                ):
                    if measuring:
                        wasted += 1
                elif seq == next_expected:
                    if seq > horizon:
                        err = ERR_ORDER
                        break
                    tx_first[seq] = f_tx[fi]
                    nxt = seq + 1
                    n_del = 1
                    d_sum = 0
                    while r_present[nxt & mask]:
                        r_present[nxt & mask] = False
                        d_sum += s - r_arrival[nxt & mask]
                        occupancy -= 1
                        n_del += 1
                        nxt += 1
                    next_expected = nxt
                    if measuring:
                        delivered_meas += n_del
                        delay_sum += d_sum
                else:
                    if seq - next_expected >= cap:
                        err = ERR_RECEIVER_RING
                        break
                    tx_first[seq] = f_tx[fi]
                    r_present[seq & mask] = True
                    r_arrival[seq & mask] = s
                    occupancy += 1
        f_seq[fi] = -1

        # feedback arrival (the ACK written db slots ago, or just now if db == 0)
        ai = (s - db) % lb
        aseq = b_seq[ai]
        if aseq >= 0 and not b_lost[ai]:
            k = aseq & mask
            if s_seq[k] == aseq and s_state[k] != 0:
                if s_state[k] == 2:
                    # resend already queued: drop it from the queue
                    j = 0
                    while j < rq_len:
                        if rq[(rq_head + j) % (W + 1)] == aseq:
                            break
                        j += 1
                    while j < rq_len - 1:
                        rq[(rq_head + j) % (W + 1)] = rq[(rq_head + j + 1) % (W + 1)]
                        j += 1
                    rq_len -= 1
                s_state[k] = 0
                outstanding -= 1
        if db > 0:
            b_seq[ai] = -1

        # timer of the packet sent R slots ago
        ti = (s - R) % lt
        tseq = t_seq[ti]
        if tseq >= 0 and s - R >= 0:
            k = tseq & mask
            if s_seq[k] == tseq and s_state[k] == 1 and s_last[k] == s - R:
                s_state[k] = 2
                rq[(rq_head + rq_len) % (W + 1)] = tseq
                rq_len += 1
        t_seq[ti] = -1

        # emit
        send = -1
        if rq_len > 0:
            send = rq[rq_head]
            rq_head = (rq_head + 1) % (W + 1)
            rq_len -= 1
            k = send & mask
            s_tx[k] += 1
        elif outstanding < W:
            send = next_seq
            k = send & mask
            if s_state[k] != 0:
                err = ERR_SENDER_RING
                break
            next_seq += 1
            s_seq[k] = send
            s_tx[k] = 1
            outstanding += 1
            if outstanding > W:
                err = ERR_WINDOW
                break
        if send >= 0:
            k = send & mask
            if s_tx[k] > 65535:
                err = ERR_TX_OVERFLOW
                break
            s_state[k] = 1
            s_last[k] = s
            t_seq[s % lt] = send
            wi = (s + df) % lf
            f_seq[wi] = send
            f_tx[wi] = s_tx[k]
            f_lost[wi] = _lost(fwd_rng, p)
            if measuring:
                sends += 1
        if measuring:
            occ_sum += occupancy

    stats = np.zeros(10, np.int64)
    stats[0] = err
    stats[1] = ws
    stats[2] = ne_at_ws
    stats[3] = next_expected
    stats[4] = occ_sum
    stats[5] = delivered_meas
    stats[6] = delay_sum
    stats[7] = wasted
    stats[8] = sends
    stats[9] = next_seq
    return stats, tx_first


@njit(cache=True)
def fec_kernel(
    W, B, R, df, p, p_a, copies, horizon, warmup, oblivious, mask_key,
    fwd_rng, fb_rng, cap,
):
    """Returns (stats int64[10], per-block transmissions to decode)."""
    db = R - df
    lf = df + 1
    lb = db + 1
    lt = R + 1
    mask = cap - 1
    if B >= 64:
        low_bits = np.uint64(0xFFFFFFFFFFFFFFFF)
    else:
        low_bits = (np.uint64(1) << np.uint64(B)) - np.uint64(1)

    f_blk = np.full(lf, -1, np.int64)
    f_tx = np.zeros(lf, np.int64)
    f_lost = np.zeros(lf, np.bool_)
    b_blk = np.full(lb, -1, np.int64)
    b_lost = np.zeros(lb, np.bool_)
    # send log: block, tx index, state (1 in flight, 0 retired)
    l_blk = np.full(lt, -1, np.int64)
    l_state = np.zeros(lt, np.int8)

    s_acked = np.zeros(cap, np.int64)
    s_assigned = np.zeros(cap, np.int64)
    s_next_tx = np.zeros(cap, np.int64)
    s_inflight = np.zeros(cap, np.int64)
    rq = np.zeros(W + 1, np.int64)
    rq_head = 0
    rq_len = 0
    outstanding = 0
    next_block = 0
    base_block = 0

    r_rank = np.zeros(cap, np.int64)
    r_decoded = np.zeros(cap, np.bool_)
    r_arr_sum = np.zeros(cap, np.int64)
    r_tx_dec = np.zeros(cap, np.int64)
    r_pivbits = np.zeros(cap, np.uint64)
    r_piv = np.zeros((cap, 64) if oblivious else (1, 64), np.uint64)
    ne_blk = 0
    occupancy = 0
    block_tx = np.zeros(horizon // B + 2, np.int64)

    measuring = False
    ws = -1
    ne_at_ws = 0
    occ_sum = 0
    delivered_meas = 0
    delay_sum = 0
    wasted = 0
    sends = 0
    err = OK
    one = np.uint64(1)

    for s in range(horizon):
        if not measuring:
            if warmup >= 0:
                start = s >= warmup
            else:
                start = s >= 10 * R and ne_blk * B >= 10 * W
            if start:
                measuring = True
                ws = s
                ne_at_ws = ne_blk

        fi = s % lf
        blk = f_blk[fi]
        bi = s % lb
        b_blk[bi] = -1
        if blk >= 0 and s - df >= 0 and not f_lost[fi]:
            ack = False
            if blk < ne_blk:
                ack = True
                if measuring:
                    wasted += 1
            else:
                if blk - ne_blk >= cap:
                    err = ERR_RECEIVER_RING
                    break
                k = blk & mask
                if r_decoded[k]:
                    ack = True
                    if measuring:
                        wasted += 1
                else:
                    innovative = True
                    if oblivious:
                        m = mask_from64(mask_key, blk, f_tx[fi], low_bits)
                        innovative = False
                        while m != 0:
                            lead = 63
                            while (m >> np.uint64(lead)) & one == 0:
                                lead -= 1
                            bit = one << np.uint64(lead)
                            if r_pivbits[k] & bit:
                                m ^= r_piv[k, lead]
                            else:
                                r_piv[k, lead] = m
                                r_pivbits[k] |= bit
                                innovative = True
                                break
                    if not innovative:
                        if measuring:
                            wasted += 1
                    else:
                        ack = True
                        r_rank[k] += 1
                        r_arr_sum[k] += s
                        occupancy += 1
                        if r_rank[k] == B:
                            r_decoded[k] = True
                            r_tx_dec[k] = f_tx[fi] + 1
                            while r_decoded[ne_blk & mask]:
                                h = ne_blk & mask
                                if measuring:
                                    delivered_meas += B
                                    delay_sum += B * s - r_arr_sum[h]
                                occupancy -= B
                                block_tx[ne_blk] = r_tx_dec[h]
                                r_rank[h] = 0
                                r_decoded[h] = False
                                r_arr_sum[h] = 0
                                r_pivbits[h] = 0
                                ne_blk += 1
            if ack:
                b_blk[bi] = blk
                b_lost[bi] = _ack_lost(fb_rng, p_a, copies)
        f_blk[fi] = -1

        # feedback arrival
        ai = (s - db) % lb
        ablk = b_blk[ai]
        li = (s - R) % lt
        if ablk >= 0 and not b_lost[ai]:
            k = ablk & mask
            if ablk >= base_block and ablk < base_block + cap and s_acked[k] < B and (
                s_assigned[k] > 0
            ):
                # the credit ACKed is the one sent R slots ago
                if l_blk[li] == ablk and l_state[li] == 1:
                    l_state[li] = 0
                    s_inflight[k] -= 1
                    s_acked[k] += 1
                    outstanding -= 1
                    if s_acked[k] == B:
                        while s_acked[base_block & mask] == B:
                            h = base_block & mask
                            s_acked[h] = 0
                            s_assigned[h] = 0
                            s_next_tx[h] = 0
                            s_inflight[h] = 0
                            base_block += 1
                else:
                    err = ERR_ORDER
                    break
        if db > 0:
            b_blk[ai] = -1

        # timer of the packet sent R slots ago
        if s - R >= 0 and l_blk[li] >= 0 and l_state[li] == 1:
            tb = l_blk[li]
            if tb < base_block or s_acked[tb & mask] >= B:
                err = ERR_ORDER
                break
            l_state[li] = 0
            s_inflight[tb & mask] -= 1
            rq[(rq_head + rq_len) % (W + 1)] = tb
            rq_len += 1
        l_blk[li] = -1

        # emit
        send = -1
        if rq_len > 0:
            send = rq[rq_head]
            rq_head = (rq_head + 1) % (W + 1)
            rq_len -= 1
        elif outstanding < W:
            send = next_block
            k = send & mask
            if s_assigned[k] == 0 and send - base_block >= cap:
                err = ERR_SENDER_RING
                break
            s_assigned[k] += 1
            outstanding += 1
            if outstanding > W:
                err = ERR_WINDOW
                break
            if s_assigned[k] == B:
                next_block += 1
        if send >= 0:
            k = send & mask
            tx = s_next_tx[k]
            s_next_tx[k] += 1
            s_inflight[k] += 1
            l_blk[s % lt] = send
            l_state[s % lt] = 1
            wi = (s + df) % lf
            f_blk[wi] = send
            f_tx[wi] = tx
            f_lost[wi] = _lost(fwd_rng, p)
            if measuring:
                sends += 1
        if measuring:
            occ_sum += occupancy

    stats = np.zeros(10, np.int64)
    stats[0] = err
    stats[1] = ws
    stats[2] = ne_at_ws
    stats[3] = ne_blk
    stats[4] = occ_sum
    stats[5] = delivered_meas
    stats[6] = delay_sum
    stats[7] = wasted
    stats[8] = sends
    stats[9] = next_block
    return stats, block_tx
