# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled walk kernel.

Operation-for-operation mirror of ``_pykernel``: same summation order, same
libm calls, same bit-generator draws.  Registered bodies and objective terms
run without the GIL; membership callables and Python objectives are called
back with the GIL held.  Errors are reported as status codes and raised by
the Python wrapper in ``kernel.py``.
"""
import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from cpython.ref cimport PyObject
from libc.math cimport ceil, cos, fabs, isfinite, isnan, log, log2, pow, sin, sqrt, INFINITY, NAN
from libc.stdint cimport int64_t, uint64_t
from libc.stdlib cimport free, malloc
from numpy.random cimport bitgen_t

cnp.import_array()

cdef extern from "numpy/random/distributions.h":
    double random_standard_normal(bitgen_t *bitgen_state) nogil

# status codes; keep in sync with kernel.py
DEF OK = 0
DEF ERR_BEYOND = 1
DEF ERR_CHORD_CAP = 2
DEF ERR_BOUNDARY = 3
DEF ERR_DIRECTION = 4
DEF ERR_NEAR_MAX = 5
DEF ERR_TAIL = 6
DEF ERR_REJECT = 7
DEF ERR_DEGENERATE = 8
DEF ERR_PYTHON = 9
DEF ERR_NAN = 10

# body and target codes; keep in sync with geometry.py / objectives.py
DEF BODY_BALL = 0
DEF BODY_BOX = 1
DEF BODY_POLYTOPE = 2
DEF BODY_CALLABLE = 3
DEF TARGET_UNIFORM = 0
DEF TARGET_TERMS = 1
DEF TARGET_CALLABLE = 2

DEF QUADRATIC = 0
DEF ABS_ = 1
DEF LINEAR = 2
DEF CONSTANT = 3
DEF SIN_PRODUCT = 4
DEF SIN_SUM = 5
DEF SIGN_SIN = 6
DEF RADIAL_POLY = 7
DEF RADIAL_LOG = 8

DEF TWO_PI = 6.283185307179586
DEF INV_2_53 = 1.1102230246251565e-16
DEF LOG_HALF = -0.6931471805599453
DEF ENVELOPE = 3.0


cdef struct Ctx:
    int n
    int body_code
    const double* b1
    const double* b2
    double bscal
    int brows
    PyObject* member_cb
    int tkind
    double coef
    int nterms
    const int* kinds
    const double* scal
    const double* tw
    const double* tc
    double alpha
    double sd
    uint64_t seed
    PyObject* func
    double* x
    double* u
    double* y
    double* v
    int64_t* idx
    long queries
    long attempts
    long accepted
    double last
    int err
    PyObject* errbox
    bitgen_t* rng


cdef inline uint64_t splitmix64(uint64_t x) noexcept nogil:
    cdef uint64_t z
    x = x + <uint64_t>0x9E3779B97F4A7C15
    z = x
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef double cell_normal(uint64_t seed, const int64_t* idx, int n) noexcept nogil:
    cdef uint64_t h = splitmix64(seed)
    cdef uint64_t a, b
    cdef int k
    for k in range(n):
        h = splitmix64(h ^ <uint64_t>idx[k])
    a = splitmix64(h)
    b = splitmix64(a)
    cdef double u1 = (<double>((a >> 11) + 1)) * INV_2_53
    cdef double u2 = (<double>(b >> 11)) * INV_2_53
    return sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2)


cdef int member(Ctx* c, const double* y) noexcept nogil:
    cdef int i, j, n = c.n
    cdef double s, d
    if c.body_code == BODY_BALL:
        s = 0.0
        for i in range(n):
            d = y[i] - c.b1[i]
            s += d * d
        return 1 if s <= c.bscal else 0
    if c.body_code == BODY_BOX:
        for i in range(n):
            if y[i] < c.b1[i] or y[i] > c.b2[i]:
                return 0
        return 1
    if c.body_code == BODY_POLYTOPE:
        for j in range(c.brows):
            s = 0.0
            for i in range(n):
                s += c.b1[j * n + i] * y[i]
            if s > c.b2[j]:
                return 0
        return 1
    return member_callback(c, y)


cdef int member_callback(Ctx* c, const double* y) noexcept nogil:
    cdef int i, res = -1
    with gil:
        try:
            res = 1 if (<object>c.member_cb)([y[i] for i in range(c.n)]) else 0
        except BaseException as e:
            (<list>c.errbox).append(e)
            c.err = ERR_PYTHON
            res = -1
    return res


cdef double term_value(Ctx* c, int k, const double* y) noexcept nogil:
    cdef int i, n = c.n
    cdef int kind = c.kinds[k]
    cdef const double* w = c.tw + k * n
    cdef const double* ce = c.tc + k * n
    cdef double amp = c.scal[4 * k]
    cdef double freq = c.scal[4 * k + 1]
    cdef double power = c.scal[4 * k + 2]
    cdef double scale = c.scal[4 * k + 3]
    cdef double s, d, p, r, vv, sg
    if kind == QUADRATIC:
        s = 0.0
        for i in range(n):
            d = y[i] - ce[i]
            s += w[i] * (d * d)
        return s
    if kind == ABS_:
        s = 0.0
        for i in range(n):
            s += w[i] * fabs(y[i] - ce[i])
        return s
    if kind == LINEAR:
        s = 0.0
        for i in range(n):
            s += w[i] * (y[i] - ce[i])
        return s
    if kind == CONSTANT:
        return amp
    if kind == SIN_PRODUCT:
        p = amp
        for i in range(n):
            p *= sin(freq * (y[i] - ce[i]))
        return p
    if kind == SIN_SUM:
        s = 0.0
        for i in range(n):
            s += sin(freq * (y[i] - ce[i]))
        return amp * s / <double>n
    if kind == SIGN_SIN:
        vv = sin(freq * (y[0] - ce[0]))
        sg = 1.0 if vv > 0 else (-1.0 if vv < 0 else 0.0)
        return amp * sg
    s = 0.0
    for i in range(n):
        d = y[i] - ce[i]
        s += d * d
    r = sqrt(s)
    if kind == RADIAL_POLY:
        return amp * pow(r, power) * sin(freq * r)
    return amp * log(1.0 + scale * r) * sin(freq * r)


cdef double value(Ctx* c, double* y) noexcept nogil:
    cdef int i, k
    cdef double total
    cdef bint snapped = c.alpha > 0.0
    if c.tkind == TARGET_CALLABLE:
        return value_callback(c, y)
    if snapped:
        for i in range(c.n):
            c.idx[i] = <int64_t>ceil(y[i] / c.alpha - 0.5)
            y[i] = c.alpha * <double>c.idx[i]
    total = 0.0
    for k in range(c.nterms):
        total += term_value(c, k, y)
    if snapped and c.sd > 0.0:
        total += c.sd * cell_normal(c.seed, c.idx, c.n)
    return total


cdef double value_callback(Ctx* c, double* y) noexcept nogil:
    cdef int i
    cdef double res = NAN
    with gil:
        try:
            res = float((<object>c.func)(np.array([y[i] for i in range(c.n)])))
        except BaseException as e:
            (<list>c.errbox).append(e)
            c.err = ERR_PYTHON
            res = NAN
    return res


cdef double lg(Ctx* c, double t) noexcept nogil:
    cdef int i
    cdef double v, lv
    if c.tkind == TARGET_UNIFORM:
        return 0.0
    for i in range(c.n):
        c.y[i] = c.x[i] + t * c.u[i]
    v = value(c, c.y)
    if c.err:
        return NAN
    c.queries += 1
    c.last = v
    lv = c.coef * v
    if isnan(lv):
        c.err = ERR_NAN
    return lv


cdef inline double gap(double a, double b) noexcept nogil:
    if a == b:
        return 0.0
    return fabs(a - b)


cdef int near_max(Ctx* c, double a, double b, double be, int max_iter,
                  double* p_out, double* lp_out) noexcept nogil:
    cdef int it
    cdef double xl, xc, xr, vl, vc, vr
    for it in range(max_iter):
        xl = 0.75 * a + 0.25 * b
        xc = 0.5 * a + 0.5 * b
        xr = 0.25 * a + 0.75 * b
        vl = lg(c, xl)
        if c.err:
            return c.err
        vc = lg(c, xc)
        if c.err:
            return c.err
        vr = lg(c, xr)
        if c.err:
            return c.err
        if gap(vl, vr) > be:
            if vl < vr:
                a = xl
            else:
                b = xr
        elif gap(vl, vc) > be:
            if vl < vc:
                a = xl
            else:
                b = xc
        elif gap(vr, vc) > be:
            if vr < vc:
                b = xr
            else:
                a = xc
        else:
            if vl >= vc and vl >= vr:
                p_out[0] = xl
                lp_out[0] = vl
            elif vc >= vr:
                p_out[0] = xc
                lp_out[0] = vc
            else:
                p_out[0] = xr
                lp_out[0] = vr
            return OK
    return ERR_NEAR_MAX


cdef int tail_point(Ctx* c, double p, double lp, double end, double beta, double eps,
                    int max_iter, double* out) noexcept nogil:
    cdef double log_eps = log(eps)
    cdef double hi_thr = log_eps + lp
    cdef double lo_thr = LOG_HALF - beta + log_eps + lp
    cdef double near, far, mid, v, le
    cdef int it
    le = lg(c, end)
    if c.err:
        return c.err
    if le >= lo_thr:
        out[0] = end
        return OK
    near = p
    far = end
    for it in range(max_iter):
        mid = 0.5 * (near + far)
        if mid == near or mid == far:
            # bracket collapsed onto a jump that skips the band
            out[0] = far
            return OK
        v = lg(c, mid)
        if c.err:
            return c.err
        if v > hi_thr:
            near = mid
        elif v < lo_thr:
            far = mid
        else:
            out[0] = mid
            return OK
    return ERR_TAIL


cdef int rejection(Ctx* c, double e_lo, double e_hi, double lp, double be, long max_rej,
                   double* t_out, double* lt_out) noexcept nogil:
    cdef double width = e_hi - e_lo
    cdef double shift = ENVELOPE * be
    cdef double x, uu, lx, lu
    cdef long k
    for k in range(max_rej):
        x = e_lo + width * c.rng.next_double(c.rng.state)
        uu = c.rng.next_double(c.rng.state)
        lx = lg(c, x)
        if c.err:
            return c.err
        c.attempts += 1
        if lx != -INFINITY:
            lu = log(uu) if uu > 0.0 else -INFINITY
            if lu <= (lx - lp) - shift:
                c.accepted += 1
                t_out[0] = x
                lt_out[0] = lx
                return OK
    return ERR_REJECT


cdef int chord_init(Ctx* c, double lo, double hi, double beta, double be, double eps, int max_bis,
                    double* p, double* lp, double* e_lo, double* e_hi) noexcept nogil:
    cdef int st = near_max(c, lo, hi, be, max_bis, p, lp)
    if st:
        return st
    if lp[0] == -INFINITY:
        return ERR_DEGENERATE
    st = tail_point(c, p[0], lp[0], lo, beta, eps, max_bis, e_lo)
    if st:
        return st
    return tail_point(c, p[0], lp[0], hi, beta, eps, max_bis, e_hi)


cdef double offset(Ctx* c, const double* v, double tol, double step0, double limit, long cap,
                   int* status) noexcept nogil:
    cdef double inside = 0.0, outside = 0.0, s = step0, mid
    cdef long it = 0
    cdef int i, m
    while True:
        if s >= limit:
            s = limit
        for i in range(c.n):
            c.y[i] = c.x[i] + s * v[i]
        m = member(c, c.y)
        if m < 0:
            status[0] = c.err
            return 0.0
        if m:
            if s >= limit:
                status[0] = ERR_BEYOND
                return 0.0
            inside = s
            s = 2.0 * s
        else:
            outside = s
            break
        it += 1
        if it > cap:
            status[0] = ERR_CHORD_CAP
            return 0.0
    while outside - inside > tol:
        mid = 0.5 * (inside + outside)
        for i in range(c.n):
            c.y[i] = c.x[i] + mid * v[i]
        m = member(c, c.y)
        if m < 0:
            status[0] = c.err
            return 0.0
        if m:
            inside = mid
        else:
            outside = mid
        it += 1
        if it > cap:
            status[0] = ERR_CHORD_CAP
            return 0.0
    status[0] = OK
    return inside


cdef int walk_loop(Ctx* c, const double* rows, double beta, double eps, double beta_floor,
                   long max_rej, int max_bis, double tol, double R, double r, long steps,
                   bint strict_first, double* trace, double* value_out, long* step_out) noexcept nogil:
    cdef int n = c.n
    cdef int i, j, st
    cdef long k, cap
    cdef double s, nrm2, nrm, a_lo, a_hi, lo, hi, p, lp, e_lo, e_hi, t, lt
    cdef double be = beta if beta > beta_floor else beta_floor
    cdef double limit = 2.0 * R * (1.0 + 1e-9) + tol
    cdef double* z = <double*>malloc(n * sizeof(double))
    cdef double* neg = <double*>malloc(n * sizeof(double))
    if z == NULL or neg == NULL:
        free(z)
        free(neg)
        return ERR_PYTHON
    cap = <long>ceil(log2(4.0 * R / tol)) + 64
    value_out[0] = NAN
    st = OK
    for k in range(steps):
        step_out[0] = k
        for j in range(n):
            z[j] = random_standard_normal(c.rng)
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += rows[i * n + j] * z[j]
            c.v[i] = s
        nrm2 = 0.0
        for i in range(n):
            nrm2 += c.v[i] * c.v[i]
        if not (nrm2 > 1e-300) or not isfinite(nrm2):
            st = ERR_DIRECTION
            break
        nrm = sqrt(nrm2)
        for i in range(n):
            c.u[i] = c.v[i] / nrm
            neg[i] = -c.u[i]
        a_lo = offset(c, neg, tol, r, limit, cap, &st)
        if st:
            break
        a_hi = offset(c, c.u, tol, r, limit, cap, &st)
        if st:
            break
        if strict_first and k == 0 and (a_lo < tol or a_hi < tol):
            st = ERR_BOUNDARY
            break
        lo = -a_lo
        hi = a_hi
        st = chord_init(c, lo, hi, beta, be, eps, max_bis, &p, &lp, &e_lo, &e_hi)
        if st:
            break
        st = rejection(c, e_lo, e_hi, lp, be, max_rej, &t, &lt)
        if st:
            break
        for i in range(n):
            c.x[i] = c.x[i] + t * c.u[i]
        value_out[0] = c.last
        if trace != NULL:
            for i in range(n):
                trace[k * (n + 2) + i] = c.x[i]
            trace[k * (n + 2) + n] = lt
            trace[k * (n + 2) + n + 1] = <double>c.queries
    free(z)
    free(neg)
    return st


cdef bitgen_t* get_bitgen(object rng) except NULL:
    capsule = rng.bit_generator.capsule
    return <bitgen_t*>PyCapsule_GetPointer(capsule, "BitGenerator")


cdef object setup_target(Ctx* c, object target, list keep):
    cdef cnp.ndarray kinds, scal, tw, tc
    c.tkind = target.kind
    c.coef = target.coef
    c.alpha = target.grid_alpha
    c.sd = target.noise_sd
    c.seed = <uint64_t>(int(target.noise_seed) & 0xFFFFFFFFFFFFFFFF)
    c.func = <PyObject*>target.func
    c.nterms = len(target.terms)
    if c.tkind == TARGET_TERMS and c.nterms > 0:
        from .objectives import Objective
        kinds_, scal_, tw_, tc_ = Objective(c.n, target.terms)._kernel_arrays()
        kinds = np.ascontiguousarray(kinds_, dtype=np.intc)
        scal = np.ascontiguousarray(scal_, dtype=np.float64)
        tw = np.ascontiguousarray(tw_, dtype=np.float64)
        tc = np.ascontiguousarray(tc_, dtype=np.float64)
        keep.extend([kinds, scal, tw, tc])
        c.kinds = <const int*>cnp.PyArray_DATA(kinds)
        c.scal = <const double*>cnp.PyArray_DATA(scal)
        c.tw = <const double*>cnp.PyArray_DATA(tw)
        c.tc = <const double*>cnp.PyArray_DATA(tc)
    if target.func is not None:
        keep.append(target.func)


cdef object setup_state(Ctx* c, int n, list keep):
    cdef cnp.ndarray x = np.zeros(n), u = np.zeros(n), y = np.zeros(n), v = np.zeros(n)
    cdef cnp.ndarray idx = np.zeros(n, dtype=np.int64)
    keep.extend([x, u, y, v, idx])
    c.x = <double*>cnp.PyArray_DATA(x)
    c.u = <double*>cnp.PyArray_DATA(u)
    c.y = <double*>cnp.PyArray_DATA(y)
    c.v = <double*>cnp.PyArray_DATA(v)
    c.idx = <int64_t*>cnp.PyArray_DATA(idx)
    return x


def run_walk(body, target, rounding_rows, double beta, params, double tol, x0, long steps, rng,
             bint record_trace=False, bint strict_first=True):
    """See ``_pykernel.run_walk``.  Returns ``(status, step, errors, result_tuple)``."""
    cdef Ctx c
    cdef list keep = []
    cdef list errbox = []
    cdef int n = body.dimension
    cdef int st
    cdef long step = 0
    cdef double val = NAN
    cdef cnp.ndarray b1, b2, rows, trace_arr
    cdef double* trace_ptr = NULL
    c.n = n
    code, b1_, b2_, bscal, cb = body._kernel_spec()
    b1 = np.ascontiguousarray(b1_, dtype=np.float64)
    b2 = np.ascontiguousarray(b2_, dtype=np.float64)
    keep.extend([b1, b2, cb])
    c.body_code = code
    c.b1 = <const double*>cnp.PyArray_DATA(b1)
    c.b2 = <const double*>cnp.PyArray_DATA(b2)
    c.bscal = bscal
    c.brows = b2.shape[0] if code == BODY_POLYTOPE else 0
    c.member_cb = <PyObject*>cb
    setup_target(&c, target, keep)
    x = setup_state(&c, n, keep)
    x[:] = np.asarray(x0, dtype=np.float64)
    rows = np.ascontiguousarray(np.asarray(rounding_rows, dtype=np.float64).reshape(n, n))
    keep.append(rows)
    c.queries = 0
    c.attempts = 0
    c.accepted = 0
    c.last = NAN
    c.err = OK
    c.errbox = <PyObject*>errbox
    c.rng = get_bitgen(rng)
    if record_trace:
        trace_arr = np.empty((steps, n + 2))
        trace_ptr = <double*>cnp.PyArray_DATA(trace_arr)
    else:
        trace_arr = None
    cdef const double* rows_ptr = <const double*>cnp.PyArray_DATA(rows)
    cdef double eps = params.eps_tilde
    cdef double beta_floor = params.beta_floor
    cdef long max_rej = params.max_rejections
    cdef int max_bis = params.max_bisection_iters
    cdef double R = body.outer_radius
    cdef double r = body.inner_radius
    with nogil:
        st = walk_loop(&c, rows_ptr, beta, eps, beta_floor, max_rej, max_bis, tol, R, r, steps,
                       strict_first, trace_ptr, &val, &step)
    result = (np.array(x), val, c.queries, c.attempts, c.accepted, trace_arr)
    return st, step, errbox, result


def run_line(target, origin, direction, double lo, double hi, double beta, params, long size, rng):
    """See ``_pykernel.run_line``.  Returns ``(status, errors, result_tuple)``."""
    cdef Ctx c
    cdef list keep = []
    cdef list errbox = []
    cdef int n = len(origin)
    cdef int st
    cdef long k, init
    cdef double p = 0.0, lp = 0.0, e_lo = 0.0, e_hi = 0.0, t, lt
    cdef cnp.ndarray out = np.empty(size)
    cdef double* outp = <double*>cnp.PyArray_DATA(out)
    c.n = n
    c.body_code = BODY_CALLABLE
    setup_target(&c, target, keep)
    x = setup_state(&c, n, keep)
    x[:] = np.asarray(origin, dtype=np.float64)
    u = np.asarray(direction, dtype=np.float64)
    for k in range(n):
        c.u[k] = u[k]
    c.queries = 0
    c.attempts = 0
    c.accepted = 0
    c.last = NAN
    c.err = OK
    c.errbox = <PyObject*>errbox
    c.rng = get_bitgen(rng)
    cdef double be = beta if beta > params.beta_floor else params.beta_floor
    cdef double eps = params.eps_tilde
    cdef long max_rej = params.max_rejections
    cdef int max_bis = params.max_bisection_iters
    with nogil:
        st = chord_init(&c, lo, hi, beta, be, eps, max_bis, &p, &lp, &e_lo, &e_hi)
        init = c.queries
        if st == OK:
            for k in range(size):
                st = rejection(&c, e_lo, e_hi, lp, be, max_rej, &t, &lt)
                if st:
                    break
                outp[k] = t
    return st, errbox, (out, p, lp, e_lo, e_hi, init, c.queries, c.attempts, c.accepted)
