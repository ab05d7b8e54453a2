"""Compiled inner loops for the simulator and the beamformer.

Every output sample is reduced in a fixed order, so results do not depend on
the number of threads numba uses.
"""

import numba as nb
import numpy as np


@nb.njit(cache=True)
def _incident_extent(tx_pos, tx_delay, tx_amp, sc_pos, c, dt, margin):
    k_count = sc_pos.shape[0]
    m0 = np.zeros(k_count, dtype=np.int64)
    length = np.zeros(k_count, dtype=np.int64)
    for k in range(k_count):
        lo = 1e300
        hi = -1e300
        for j in range(tx_pos.shape[0]):
            if tx_amp[j] == 0.0:
                continue
            dx = sc_pos[k, 0] - tx_pos[j, 0]
            dy = sc_pos[k, 1] - tx_pos[j, 1]
            dz = sc_pos[k, 2] - tx_pos[j, 2]
            a = tx_delay[j] + np.sqrt(dx * dx + dy * dy + dz * dz) / c
            lo = min(lo, a)
            hi = max(hi, a)
        if hi < lo:
            continue
        m0[k] = np.int64(np.floor(lo / dt)) - margin
        length[k] = np.int64(np.ceil(hi / dt)) + margin - m0[k] + 1
    return m0, length


@nb.njit(parallel=True, cache=True)
def incident_fields(tx_pos, tx_delay, tx_amp, sc_pos, fs, c, upsample):
    """Impulse-excited incident field at each scatterer on a grid of step 1/(upsample*fs).

    The unit excitation is a triangle of half-width 1/fs (linear interpolation
    of a single unit sample).  Returns ``(m0, length, offset, values)``; the
    field of scatterer ``k`` is ``values[offset[k]:offset[k]+length[k]]`` with
    sample ``m`` at absolute time ``(m0[k] + m) * dt``.
    """
    dt = 1.0 / (upsample * fs)
    margin = upsample + 2
    m0, length = _incident_extent(tx_pos, tx_delay, tx_amp, sc_pos, c, dt, margin)
    k_count = sc_pos.shape[0]
    offset = np.zeros(k_count, dtype=np.int64)
    total = 0
    for k in range(k_count):
        offset[k] = total
        total += length[k]
    values = np.zeros(total)
    for k in nb.prange(k_count):
        if length[k] == 0:
            continue
        base = offset[k]
        for j in range(tx_pos.shape[0]):
            amp = tx_amp[j]
            if amp == 0.0:
                continue
            dx = sc_pos[k, 0] - tx_pos[j, 0]
            dy = sc_pos[k, 1] - tx_pos[j, 1]
            dz = sc_pos[k, 2] - tx_pos[j, 2]
            dist = np.sqrt(dx * dx + dy * dy + dz * dz)
            a = tx_delay[j] + dist / c
            g = amp / dist
            centre = a / dt - m0[k]
            m_lo = max(np.int64(np.floor(centre)) - upsample, 0)
            m_hi = min(np.int64(np.ceil(centre)) + upsample, length[k] - 1)
            for m in range(m_lo, m_hi + 1):
                tri = 1.0 - abs(m - centre) / upsample
                if tri > 0.0:
                    values[base + m] += g * tri
    return m0, length, offset, values


@nb.njit(parallel=True, cache=True)
def receive(m0, length, offset, inc, sc_pos, sc_amp, rx_pos, rx_weight,
            ch_ptr, ch_elems, fs, c, t0, n_samples, upsample):
    """Sum scattered fields into receive channels.

    Channel ``q`` integrates elements ``ch_elems[ch_ptr[q]:ch_ptr[q+1]]``,
    each weighted by ``rx_weight`` and by two-way spherical spreading.
    """
    n_ch = ch_ptr.shape[0] - 1
    out = np.zeros((n_ch, n_samples))
    dt = 1.0 / (upsample * fs)
    for q in nb.prange(n_ch):
        for ii in range(ch_ptr[q], ch_ptr[q + 1]):
            p = ch_elems[ii]
            wp = rx_weight[p]
            if wp == 0.0:
                continue
            for k in range(sc_pos.shape[0]):
                if sc_amp[k] == 0.0 or length[k] == 0:
                    continue
                dx = sc_pos[k, 0] - rx_pos[p, 0]
                dy = sc_pos[k, 1] - rx_pos[p, 1]
                dz = sc_pos[k, 2] - rx_pos[p, 2]
                dist = np.sqrt(dx * dx + dy * dy + dz * dz)
                g = wp * sc_amp[k] / dist
                r = dist / c
                start = m0[k] * dt + r
                stop = (m0[k] + length[k] - 1) * dt + r
                n_lo = max(np.int64(np.ceil((start - t0) * fs)), 0)
                n_hi = min(np.int64(np.floor((stop - t0) * fs)), n_samples - 1)
                base = offset[k]
                last = length[k] - 1
                for n in range(n_lo, n_hi + 1):
                    x = ((t0 + n / fs) - r) / dt - m0[k]
                    i = np.int64(np.floor(x))
                    if i < 0:
                        continue
                    if i >= last:
                        out[q, n] += g * inc[base + last]
                        continue
                    f = x - i
                    out[q, n] += g * (inc[base + i] * (1.0 - f) + inc[base + i + 1] * f)
    return out


@nb.njit(parallel=True, cache=True)
def das(data, fs, t0, tx_time, vox, rx_pos, line_coord, c, weights, f_number):
    """Delay-and-sum of analytic traces onto voxels.

    ``line_coord < 0`` selects point receivers (full 3-D distance); otherwise
    the receive distance uses only coordinate ``line_coord`` and depth.
    ``f_number > 0`` gates receivers outside the aperture ``z / f_number``.
    """
    n_vox = vox.shape[0]
    n_rx = rx_pos.shape[0]
    n_t = data.shape[1]
    out = np.zeros(n_vox, dtype=np.complex128)
    for v in nb.prange(n_vox):
        acc = 0.0 + 0.0j
        z = vox[v, 2]
        half_ap = z / (2.0 * f_number) if f_number > 0.0 else 1e300
        for p in range(n_rx):
            w = weights[p]
            if w == 0.0:
                continue
            if line_coord < 0:
                dx = vox[v, 0] - rx_pos[p, 0]
                dy = vox[v, 1] - rx_pos[p, 1]
                if dx * dx + dy * dy > half_ap * half_ap:
                    continue
                dz = z - rx_pos[p, 2]
                d = np.sqrt(dx * dx + dy * dy + dz * dz)
            else:
                du = vox[v, line_coord] - rx_pos[p, line_coord]
                if abs(du) > half_ap:
                    continue
                d = np.sqrt(du * du + z * z)
            x = (tx_time[v] + d / c - t0) * fs
            if x < 0.0 or x > n_t - 1:
                continue
            i = np.int64(np.floor(x))
            if i >= n_t - 1:
                acc += w * data[p, n_t - 1]
                continue
            f = x - i
            acc += w * (data[p, i] * (1.0 - f) + data[p, i + 1] * f)
        out[v] = acc
    return out
