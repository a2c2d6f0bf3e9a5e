"""Pure-Python implementations of the hot loops.

These define the reference semantics; ``_kernels.pyx`` mirrors them line for
line.  All array arguments are updated in place where noted.
"""
import numpy as np

# time slack when deciding whether a phase finishes inside the frame
EPS = 1e-12


def simulate_frame(
    T0, k, resid_local, resid_bits, task_b, task_c, task_elapsed, task_energy, task_local_energy,
    act_b, act_c, power, rates, tf, tc, ef, ec, payload,
    completed, energy_local, energy_tx, bits_sent, busy, latency_sum, completed_energy,
):
    """Advance every UE through one frame of length ``T0``.

    Per-UE state (``k`` .. ``task_local_energy``) is updated in place;
    ``task_b < 0`` means no task is in flight.  Output arrays (``completed``
    onwards) are overwritten.
    """
    n_ue = k.shape[0]
    local_idx = tf.shape[1] - 1
    for n in range(n_ue):
        t = 0.0
        done = 0
        e_loc = 0.0
        e_tx = 0.0
        sent_total = 0.0
        busy_t = 0.0
        lat = 0.0
        comp_e = 0.0
        while True:
            if task_b[n] < 0:
                if k[n] <= 0 or T0 - t <= EPS:
                    break
                b = act_b[n]
                task_b[n] = b
                task_c[n] = act_c[n]
                resid_local[n] = tf[n, b] + tc[n, b]
                resid_bits[n] = payload[n, b] if b != local_idx else 0.0
                task_elapsed[n] = 0.0
                task_energy[n] = 0.0
                task_local_energy[n] = 0.0
            b = task_b[n]
            if resid_local[n] > 0.0:
                avail = T0 - t
                if avail <= EPS:
                    break
                local_total = tf[n, b] + tc[n, b]
                if resid_local[n] <= avail + EPS:
                    dt = resid_local[n]
                    e = ef[n, b] + ec[n, b] - task_local_energy[n]
                    resid_local[n] = 0.0
                else:
                    dt = avail
                    e = (ef[n, b] + ec[n, b]) * dt / local_total
                    resid_local[n] -= dt
                task_local_energy[n] += e
                task_energy[n] += e
                task_elapsed[n] += dt
                e_loc += e
                busy_t += dt
                t += dt
                if resid_local[n] > 0.0:
                    break
            if resid_bits[n] > 0.0:
                avail = T0 - t
                if avail <= EPS:
                    break
                r = rates[n, task_c[n]]
                if r <= 0.0:
                    break
                need = resid_bits[n] / r
                if need <= avail + EPS:
                    dt = need
                    sent = resid_bits[n]
                    resid_bits[n] = 0.0
                else:
                    dt = avail
                    sent = r * dt
                    resid_bits[n] -= sent
                e = power[n] * dt
                task_energy[n] += e
                task_elapsed[n] += dt
                e_tx += e
                sent_total += sent
                busy_t += dt
                t += dt
                if resid_bits[n] > 0.0:
                    break
            done += 1
            k[n] -= 1
            lat += task_elapsed[n]
            comp_e += task_energy[n]
            task_b[n] = -1
            task_c[n] = -1
            task_elapsed[n] = 0.0
            task_energy[n] = 0.0
            task_local_energy[n] = 0.0
        completed[n] = done
        energy_local[n] = e_loc
        energy_tx[n] = e_tx
        bits_sent[n] = sent_total
        busy[n] = busy_t
        latency_sum[n] = lat
        completed_energy[n] = comp_e


def discounted_returns(rewards, dones, gamma, last_value):
    """Backward discounted sums, restarting after every ``dones[t]``."""
    T = rewards.shape[0]
    out = np.empty(T, dtype=np.float64)
    running = last_value
    for t in range(T - 1, -1, -1):
        if dones[t]:
            running = 0.0
        running = rewards[t] + gamma * running
        out[t] = running
    return out


def gae(rewards, values, dones, gamma, lam, last_value):
    """Generalized advantage estimates from TD residuals."""
    T = rewards.shape[0]
    out = np.empty(T, dtype=np.float64)
    next_value = last_value
    acc = 0.0
    for t in range(T - 1, -1, -1):
        if dones[t]:
            next_value = 0.0
            acc = 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        acc = delta + gamma * lam * acc
        out[t] = acc
        next_value = values[t]
    return out
