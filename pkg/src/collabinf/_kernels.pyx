# cython: language_level=3
"""Compiled versions of the loops in ``_kernels_py``; same signatures."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double EPS = 1e-12


def simulate_frame(
    double T0,
    long long[::1] k,
    double[::1] resid_local,
    double[::1] resid_bits,
    long long[::1] task_b,
    long long[::1] task_c,
    double[::1] task_elapsed,
    double[::1] task_energy,
    double[::1] task_local_energy,
    const long long[::1] act_b,
    const long long[::1] act_c,
    const double[::1] power,
    const double[:, ::1] rates,
    const double[:, ::1] tf,
    const double[:, ::1] tc,
    const double[:, ::1] ef,
    const double[:, ::1] ec,
    const double[:, ::1] payload,
    long long[::1] completed,
    double[::1] energy_local,
    double[::1] energy_tx,
    double[::1] bits_sent,
    double[::1] busy,
    double[::1] latency_sum,
    double[::1] completed_energy,
):
    cdef Py_ssize_t n_ue = k.shape[0]
    cdef Py_ssize_t local_idx = tf.shape[1] - 1
    cdef Py_ssize_t n, b
    cdef double t, e_loc, e_tx, sent_total, busy_t, lat, comp_e
    cdef double avail, local_total, dt, e, r, need, sent
    cdef long long done
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
                if b != local_idx:
                    resid_bits[n] = payload[n, b]
                else:
                    resid_bits[n] = 0.0
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


def discounted_returns(const double[::1] rewards, const unsigned char[::1] dones, double gamma, double last_value):
    cdef Py_ssize_t T = rewards.shape[0]
    cdef Py_ssize_t t
    out = np.empty(T, dtype=np.float64)
    cdef double[::1] o = out
    cdef double running = last_value
    for t in range(T - 1, -1, -1):
        if dones[t]:
            running = 0.0
        running = rewards[t] + gamma * running
        o[t] = running
    return out


def gae(const double[::1] rewards, const double[::1] values, const unsigned char[::1] dones,
        double gamma, double lam, double last_value):
    cdef Py_ssize_t T = rewards.shape[0]
    cdef Py_ssize_t t
    out = np.empty(T, dtype=np.float64)
    cdef double[::1] o = out
    cdef double next_value = last_value
    cdef double acc = 0.0
    cdef double delta
    for t in range(T - 1, -1, -1):
        if dones[t]:
            next_value = 0.0
            acc = 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        acc = delta + gamma * lam * acc
        o[t] = acc
        next_value = values[t]
    return out
