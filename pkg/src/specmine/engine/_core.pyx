# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled execution core.

The whole block-execution hot path lives here in C: the key/value table,
per-key abstract locks with use counters, inverse logs, gas accounting,
deadlock detection, and the contract bodies themselves. A resident
pthread pool (created when the store is loaded, so thread startup never
lands inside a timed region) runs transactions without the interpreter
lock, which is what lets a multi-worker miner actually run in parallel
under CPython.

Semantics are an exact twin of specmine.engine.pure: identical operation
orders, lock/counter rules, nested-action handling, deadlock victim
choice, and (with a single worker) an identical event stream. The pure
module is the readable reference; this one exists to be fast.

Capacity rules inherited from the value model: byte strings are at most
32 bytes and integers fit in 64 bits, so values live in fixed-size
tagged slots with no allocation during execution.
"""

from ..model import Address, StorageKey, UsageError

from libc.stdint cimport int8_t, int16_t, int32_t, int64_t, uint8_t, uint16_t, uint32_t, uint64_t
from libc.stdlib cimport calloc, free, malloc, realloc
from libc.string cimport memcmp, memcpy, memset

cdef extern from *:
    """
    #include <stdint.h>

    static inline long sm_load(long *p)
    { return __atomic_load_n(p, __ATOMIC_SEQ_CST); }
    static inline void sm_store(long *p, long v)
    { __atomic_store_n(p, v, __ATOMIC_SEQ_CST); }
    static inline long sm_faa(long *p, long v)
    { return __atomic_fetch_add(p, v, __ATOMIC_SEQ_CST); }
    static inline int sm_cas(long *p, long expect, long v)
    { return __atomic_compare_exchange_n(p, &expect, v, 0,
                                         __ATOMIC_SEQ_CST, __ATOMIC_SEQ_CST); }
    static inline void sm_spin_lock(long *p)
    { while (__atomic_exchange_n(p, 1, __ATOMIC_ACQUIRE)) { } }
    static inline void sm_spin_unlock(long *p)
    { __atomic_store_n(p, 0, __ATOMIC_RELEASE); }
    """
    long sm_load(long* p) nogil
    void sm_store(long* p, long v) nogil
    long sm_faa(long* p, long v) nogil
    int sm_cas(long* p, long expect, long v) nogil
    void sm_spin_lock(long* p) nogil
    void sm_spin_unlock(long* p) nogil

cdef extern from "pthread.h" nogil:
    ctypedef struct pthread_mutex_t:
        pass
    ctypedef struct pthread_cond_t:
        pass
    ctypedef unsigned long pthread_t
    int pthread_mutex_init(pthread_mutex_t*, void*)
    int pthread_mutex_destroy(pthread_mutex_t*)
    int pthread_mutex_lock(pthread_mutex_t*)
    int pthread_mutex_unlock(pthread_mutex_t*)
    int pthread_cond_init(pthread_cond_t*, void*)
    int pthread_cond_destroy(pthread_cond_t*)
    int pthread_cond_wait(pthread_cond_t*, pthread_mutex_t*)
    int pthread_cond_signal(pthread_cond_t*)
    int pthread_cond_broadcast(pthread_cond_t*)
    int pthread_create(pthread_t*, void*, void* (*)(void*) nogil, void*)
    int pthread_join(pthread_t, void**)


# ---------------------------------------------------------------------------
# constants

cdef enum:
    MAXB = 32          # longest byte-string payload (MAX_BYTES_LEN)
    MAXARGS = 6
    MAXLEV = 8         # nested action depth bound

    TAG_ABSENT = 0
    TAG_INT = 1
    TAG_BOOL = 2
    TAG_ADDR = 3
    TAG_BYTES = 4

    RC_OK = 0
    RC_REVERT = 1
    RC_OOG = 2
    RC_KILLED = 3
    RC_FATAL = 4

    MODE_SERIAL = 0
    MODE_MINE = 1
    MODE_REPLAY = 2

    ST_COMMITTED = 0
    ST_REVERTED = 1
    ST_OUT_OF_GAS = 2

    K_BEGIN = 0
    K_ACQUIRE = 1
    K_BLOCK = 2
    K_VICTIM = 3
    K_OPREAD = 4
    K_OPWRITE = 5
    K_OPDELETE = 6
    K_UNDO = 7
    K_COMMIT = 8
    K_REVERT = 9
    K_OOG = 10
    K_ABORT = 11
    K_ABSORB = 12
    K_RELEASE = 13

    CID_BALLOT = 0
    CID_AUCTION = 1
    CID_ETHERDOC = 2
    CID_COMBO = 3

    VID_SCALARS = 0
    VID_V_WEIGHT = 1
    VID_V_VOTED = 2
    VID_V_DELEGATE = 3
    VID_V_VOTE = 4
    VID_P_NAME = 5
    VID_P_COUNT = 6
    VID_META = 7
    VID_PENDING = 8
    VID_BALANCES = 9
    VID_D_EXISTS = 10
    VID_D_OWNER = 11
    VID_OWNED_COUNT = 12

    FID_GIVE_RIGHT = 0
    FID_VOTE = 1
    FID_DELEGATE = 2
    FID_BID = 3
    FID_BID_PLUS_ONE = 4
    FID_WITHDRAW = 5
    FID_CREATE = 6
    FID_EXISTS = 7
    FID_TRANSFER = 8
    FID_VOTE_THEN_BID = 9
    FID_VOTE_THEN_WITHDRAW = 10
    FID_UNKNOWN = -1   # dispatches to an immediate revert

KNOWN_CONTRACTS = ["ballot", "auction", "etherdoc", "combo"]
KNOWN_VARIABLES = [
    "scalars", "voters.weight", "voters.voted", "voters.delegate",
    "voters.vote", "proposals.name", "proposals.count", "@meta",
    "pending", "balances", "docs.exists", "docs.owner", "owned_count",
]
FUNCTION_IDS = {
    (CID_BALLOT, "give_right"): FID_GIVE_RIGHT,
    (CID_BALLOT, "vote"): FID_VOTE,
    (CID_BALLOT, "delegate"): FID_DELEGATE,
    (CID_AUCTION, "bid"): FID_BID,
    (CID_AUCTION, "bid_plus_one"): FID_BID_PLUS_ONE,
    (CID_AUCTION, "withdraw"): FID_WITHDRAW,
    (CID_ETHERDOC, "create"): FID_CREATE,
    (CID_ETHERDOC, "exists"): FID_EXISTS,
    (CID_ETHERDOC, "transfer"): FID_TRANSFER,
    (CID_COMBO, "vote_then_bid"): FID_VOTE_THEN_BID,
    (CID_COMBO, "vote_then_withdraw"): FID_VOTE_THEN_WITHDRAW,
}
EVENT_KINDS = [
    "begin", "acquire", "block", "victim", "op_read", "op_write",
    "op_delete", "undo", "commit", "revert", "oog", "abort", "absorb",
    "release",
]


# ---------------------------------------------------------------------------
# data layout

cdef struct TVal:
    uint8_t tag
    uint8_t blen
    int64_t i
    char b[MAXB]

cdef struct Slot:
    uint32_t hash
    long state          # 0 empty, 1 ready (atomic)
    uint16_t cid
    uint16_t vid
    TVal mk
    TVal val
    long owner          # root index or -1 (atomic)
    long nwaiters       # atomic
    int32_t qhead
    int32_t qtail
    uint32_t counter
    long spin           # value guard, replay mode with several workers

cdef struct LogEnt:
    int32_t slot
    TVal old            # tag ABSENT means the key had no value

cdef struct CEvent:
    int64_t seq
    int32_t tx
    int32_t action
    int32_t slot        # -1 for lifecycle events
    int32_t aux         # victim tx id
    int16_t worker
    uint8_t kind

cdef struct EventBuf:
    CEvent* ev
    int64_t len
    int64_t cap

cdef struct Root:
    int32_t idx
    int32_t worker
    int32_t status
    int32_t retries
    int64_t gas_used
    int64_t gas_limit
    TVal sender
    long killed
    long granted
    int32_t waiting_slot
    int32_t next_waiter
    int32_t level
    int32_t cur_action
    int32_t lev_held[MAXLEV]
    int32_t lev_log[MAXLEV]
    int32_t lev_action[MAXLEV]
    int64_t lev_value[MAXLEV]
    int32_t* held
    int32_t held_len
    int32_t held_cap
    LogEnt* log
    int32_t log_len
    int32_t log_cap
    int32_t* trace
    int32_t trace_len
    int32_t trace_cap
    int32_t* prof_slots
    uint32_t* prof_cnts
    int32_t prof_len

cdef struct LTx:
    int32_t cid
    int32_t fid
    int32_t nargs
    TVal args[MAXARGS]
    TVal sender
    int64_t value
    int64_t gas_limit

cdef struct Core:
    Slot* table
    int64_t tcap
    int64_t tused
    long overflow
    pthread_mutex_t tablemu
    pthread_mutex_t G               # lock transitions, deadlock, finish
    pthread_cond_t* wcv             # per-worker wait points, used with G
    int32_t nworkers                # pool size (0 when single-worker)
    Root* roots
    int32_t nroots
    LTx* txs
    int32_t ntxs
    long next_action
    long evseq
    int record
    EventBuf* evbuf
    int32_t nevbuf
    int64_t meta_nprop
    int replay_par                  # slot spinlocks engaged during replay
    # deadlock scratch (guarded by G)
    int8_t* vstate
    int32_t* vpath
    int32_t* vneigh
    # pool control
    pthread_mutex_t jobmu
    pthread_cond_t jobcv
    pthread_cond_t donecv
    long job_id
    int job_mode
    long cursor
    long jdone
    int shutdown
    pthread_t* threads
    # replay scheduling
    pthread_mutex_t repmu
    pthread_cond_t repcv
    int32_t* indeg
    int32_t* rheap
    int32_t rheaplen
    int32_t* succ_off
    int32_t* succ_dat
    long rdone

cdef struct WorkerArg:
    Core* core
    int32_t wid


# ---------------------------------------------------------------------------
# tagged values

cdef inline void tv_none(TVal* o) noexcept nogil:
    o.tag = TAG_ABSENT
    o.blen = 0
    o.i = 0

cdef inline void tv_int(TVal* o, int64_t x) noexcept nogil:
    o.tag = TAG_INT
    o.blen = 0
    o.i = x

cdef inline void tv_bool(TVal* o, bint x) noexcept nogil:
    o.tag = TAG_BOOL
    o.blen = 0
    o.i = 1 if x else 0

cdef inline int64_t as_int(TVal* v) noexcept nogil:
    # non-integers (absent, bool, bytes) read as zero
    return v.i if v.tag == TAG_INT else 0

cdef inline bint as_bool(TVal* v) noexcept nogil:
    if v.tag == TAG_ABSENT:
        return 0
    if v.tag == TAG_INT or v.tag == TAG_BOOL:
        return v.i != 0
    if v.tag == TAG_ADDR:
        return 1
    return v.blen > 0

cdef inline bint val_eq(TVal* a, TVal* b) noexcept nogil:
    # numbers compare across int/bool, byte strings across address/bytes
    cdef bint a_num = a.tag == TAG_INT or a.tag == TAG_BOOL
    cdef bint b_num = b.tag == TAG_INT or b.tag == TAG_BOOL
    if a_num and b_num:
        return a.i == b.i
    cdef bint a_byt = a.tag == TAG_ADDR or a.tag == TAG_BYTES
    cdef bint b_byt = b.tag == TAG_ADDR or b.tag == TAG_BYTES
    if a_byt and b_byt:
        return a.blen == b.blen and memcmp(a.b, b.b, a.blen) == 0
    return a.tag == TAG_ABSENT and b.tag == TAG_ABSENT


# ---------------------------------------------------------------------------
# key table

cdef inline uint32_t key_hash(uint16_t cid, uint16_t vid, TVal* mk) noexcept nogil:
    cdef uint32_t h = 2166136261u
    cdef uint8_t tag = TAG_INT if mk.tag == TAG_BOOL else mk.tag
    cdef int i
    h = (h ^ cid) * 16777619u
    h = (h ^ vid) * 16777619u
    h = (h ^ tag) * 16777619u
    if tag == TAG_INT:
        for i in range(8):
            h = (h ^ <uint8_t>((<uint64_t>mk.i) >> (8 * i))) * 16777619u
    else:
        for i in range(mk.blen):
            h = (h ^ <uint8_t>mk.b[i]) * 16777619u
    return h

cdef inline bint mk_matches(Slot* s, uint16_t cid, uint16_t vid, uint8_t tag, TVal* mk) noexcept nogil:
    if s.cid != cid or s.vid != vid or s.mk.tag != tag:
        return 0
    if tag == TAG_INT:
        return s.mk.i == mk.i
    if tag == TAG_ABSENT:
        return 1
    return s.mk.blen == mk.blen and memcmp(s.mk.b, mk.b, mk.blen) == 0

cdef int32_t find_or_insert(Core* c, uint16_t cid, uint16_t vid, TVal* mk) noexcept nogil:
    """Intern a key, returning its slot; -1 when the table is full."""
    cdef uint8_t tag = TAG_INT if mk.tag == TAG_BOOL else mk.tag
    cdef uint32_t h = key_hash(cid, vid, mk)
    cdef int64_t mask = c.tcap - 1
    cdef int64_t i = h & mask
    cdef Slot* s
    while True:
        s = &c.table[i]
        if sm_load(&s.state) == 1:
            if s.hash == h and mk_matches(s, cid, vid, tag, mk):
                return <int32_t>i
            i = (i + 1) & mask
            continue
        # first empty probe: insert under the table mutex
        pthread_mutex_lock(&c.tablemu)
        while sm_load(&c.table[i].state) == 1:
            s = &c.table[i]
            if s.hash == h and mk_matches(s, cid, vid, tag, mk):
                pthread_mutex_unlock(&c.tablemu)
                return <int32_t>i
            i = (i + 1) & mask
        if c.tused >= c.tcap - (c.tcap >> 2):
            c.overflow = 1
            pthread_mutex_unlock(&c.tablemu)
            return -1
        s = &c.table[i]
        s.hash = h
        s.cid = cid
        s.vid = vid
        s.mk = mk[0]
        s.mk.tag = tag
        tv_none(&s.val)
        s.owner = -1
        s.nwaiters = 0
        s.qhead = -1
        s.qtail = -1
        s.counter = 0
        s.spin = 0
        c.tused += 1
        sm_store(&s.state, 1)
        pthread_mutex_unlock(&c.tablemu)
        return <int32_t>i


# ---------------------------------------------------------------------------
# events

cdef void ev(Core* c, Root* r, int32_t action, uint8_t kind, int32_t slot, int32_t aux) noexcept nogil:
    cdef EventBuf* buf
    cdef CEvent* e
    cdef int64_t ncap
    if not c.record:
        return
    buf = &c.evbuf[r.worker]
    if buf.len == buf.cap:
        ncap = 256 if buf.cap == 0 else buf.cap * 2
        buf.ev = <CEvent*>realloc(buf.ev, ncap * sizeof(CEvent))
        buf.cap = ncap
    e = &buf.ev[buf.len]
    buf.len += 1
    e.seq = sm_faa(&c.evseq, 1)
    e.worker = <int16_t>r.worker
    e.tx = r.idx
    e.action = action
    e.kind = kind
    e.slot = slot
    e.aux = aux


# ---------------------------------------------------------------------------
# per-root buffers

cdef inline int held_push(Root* r, int32_t slot) noexcept nogil:
    cdef int32_t ncap
    if r.held_len == r.held_cap:
        ncap = 16 if r.held_cap == 0 else r.held_cap * 2
        r.held = <int32_t*>realloc(r.held, ncap * sizeof(int32_t))
        r.held_cap = ncap
    r.held[r.held_len] = slot
    r.held_len += 1
    return 0

cdef inline int log_push(Root* r, int32_t slot, TVal* old) noexcept nogil:
    cdef int32_t ncap
    if r.log_len == r.log_cap:
        ncap = 16 if r.log_cap == 0 else r.log_cap * 2
        r.log = <LogEnt*>realloc(r.log, ncap * sizeof(LogEnt))
        r.log_cap = ncap
    r.log[r.log_len].slot = slot
    r.log[r.log_len].old = old[0]
    r.log_len += 1
    return 0

cdef inline void trace_push(Root* r, int32_t slot) noexcept nogil:
    cdef int32_t ncap
    if r.trace_len == r.trace_cap:
        ncap = 32 if r.trace_cap == 0 else r.trace_cap * 2
        r.trace = <int32_t*>realloc(r.trace, ncap * sizeof(int32_t))
        r.trace_cap = ncap
    r.trace[r.trace_len] = slot
    r.trace_len += 1


# ---------------------------------------------------------------------------
# deadlock detection (mirror of the pure helper: DFS over blocked roots in
# ascending tx order with ascending neighbors; victim = largest tx id on
# the first cycle found). Runs with G held.

cdef inline bint _blocked(Core* c, int32_t u) noexcept nogil:
    return c.roots[u].waiting_slot >= 0 and not sm_load(&c.roots[u].killed)

cdef int32_t _neighbors(Core* c, int32_t u, int32_t* out) noexcept nogil:
    # owner of the awaited lock plus everyone queued ahead, sorted, deduped
    cdef Slot* s = &c.table[c.roots[u].waiting_slot]
    cdef int32_t n = 0
    cdef long own = sm_load(&s.owner)
    cdef int32_t w, i, j, t
    if own >= 0 and not sm_load(&c.roots[own].killed):
        out[n] = <int32_t>own
        n += 1
    w = s.qhead
    while w >= 0 and w != u:
        if not sm_load(&c.roots[w].killed):
            out[n] = w
            n += 1
        w = c.roots[w].next_waiter
    for i in range(1, n):  # insertion sort: n is tiny
        t = out[i]
        j = i - 1
        while j >= 0 and out[j] > t:
            out[j + 1] = out[j]
            j -= 1
        out[j + 1] = t
    j = 0
    for i in range(n):
        if i == 0 or out[i] != out[i - 1]:
            out[j] = out[i]
            j += 1
    return j

cdef int32_t _visit(Core* c, int32_t u, int32_t* plen) noexcept nogil:
    cdef int32_t neigh[64]
    cdef int32_t nn, k, v, m, idx, best
    c.vstate[u] = 1
    c.vpath[plen[0]] = u
    plen[0] += 1
    nn = _neighbors(c, u, neigh)
    for k in range(nn):
        v = neigh[k]
        if c.vstate[v] == 1:
            idx = 0
            while c.vpath[idx] != v:
                idx += 1
            best = v
            for m in range(idx, plen[0]):
                if c.vpath[m] > best:
                    best = c.vpath[m]
            return best
        if c.vstate[v] == 0:
            if _blocked(c, v):
                best = _visit(c, v, plen)
                if best >= 0:
                    return best
            else:
                c.vstate[v] = 2
    plen[0] -= 1
    c.vstate[u] = 2
    return -1

cdef int32_t find_victim(Core* c) noexcept nogil:
    cdef int32_t u, best, plen
    memset(c.vstate, 0, c.ntxs)
    plen = 0
    for u in range(c.ntxs):
        if _blocked(c, u) and c.vstate[u] == 0:
            best = _visit(c, u, &plen)
            if best >= 0:
                return best
            plen = 0
    return -1


# ---------------------------------------------------------------------------
# abstract locks

cdef void _queue_push(Core* c, Slot* s, int32_t u) noexcept nogil:
    c.roots[u].next_waiter = -1
    if s.qtail < 0:
        s.qhead = u
        s.qtail = u
    else:
        c.roots[s.qtail].next_waiter = u
        s.qtail = u
    sm_faa(&s.nwaiters, 1)

cdef void _queue_remove(Core* c, Slot* s, int32_t u) noexcept nogil:
    cdef int32_t prev = -1
    cdef int32_t w = s.qhead
    while w >= 0:
        if w == u:
            if prev < 0:
                s.qhead = c.roots[w].next_waiter
            else:
                c.roots[prev].next_waiter = c.roots[w].next_waiter
            if s.qtail == u:
                s.qtail = prev
            sm_faa(&s.nwaiters, -1)
            return
        prev = w
        w = c.roots[w].next_waiter

cdef int acquire(Core* c, Root* r, int32_t slot) noexcept nogil:
    """Take the abstract lock for the running action's family."""
    cdef Slot* s = &c.table[slot]
    cdef long own
    cdef int32_t victim
    cdef Root* vr
    if sm_load(&r.killed):
        return RC_KILLED
    own = sm_load(&s.owner)
    if own == r.idx:
        return RC_OK           # already held by this transaction's tree
    if own == -1 and sm_load(&s.nwaiters) == 0:
        if sm_cas(&s.owner, -1, r.idx):
            held_push(r, slot)
            ev(c, r, r.cur_action, K_ACQUIRE, slot, 0)
            return RC_OK

    pthread_mutex_lock(&c.G)
    own = sm_load(&s.owner)
    if own == r.idx:
        pthread_mutex_unlock(&c.G)
        return RC_OK
    if own == -1 and s.qhead < 0 and sm_cas(&s.owner, -1, r.idx):
        # CAS even under G: fast-path acquirers do not take the mutex
        held_push(r, slot)
        ev(c, r, r.cur_action, K_ACQUIRE, slot, 0)
        pthread_mutex_unlock(&c.G)
        return RC_OK

    # contended: queue up, then look for a deadlock we just created
    _queue_push(c, s, r.idx)
    r.waiting_slot = slot
    ev(c, r, r.cur_action, K_BLOCK, slot, 0)
    victim = find_victim(c)
    if victim >= 0:
        ev(c, r, r.cur_action, K_VICTIM, slot, victim)
        vr = &c.roots[victim]
        sm_store(&vr.killed, 1)
        if vr is not r:
            pthread_cond_signal(&c.wcv[vr.worker])
    while not sm_load(&r.granted) and not sm_load(&r.killed):
        pthread_cond_wait(&c.wcv[r.worker], &c.G)
    r.waiting_slot = -1
    if sm_load(&r.granted):
        # the releaser already dequeued us and transferred ownership
        sm_store(&r.granted, 0)
        held_push(r, slot)
        ev(c, r, r.cur_action, K_ACQUIRE, slot, 0)
        if sm_load(&r.killed):
            pthread_mutex_unlock(&c.G)
            return RC_KILLED   # the abort path releases everything held
        pthread_mutex_unlock(&c.G)
        return RC_OK
    _queue_remove(c, s, r.idx)
    pthread_mutex_unlock(&c.G)
    return RC_KILLED

cdef void release_from(Core* c, Root* r, int32_t from_idx, int32_t action) noexcept nogil:
    """Release held locks from a mark to the end, newest first. G held."""
    cdef int32_t i, h
    cdef Slot* s
    cdef Root* hr
    for i in range(r.held_len - 1, from_idx - 1, -1):
        s = &c.table[r.held[i]]
        sm_store(&s.owner, -1)
        ev(c, r, action, K_RELEASE, r.held[i], 0)
        while s.qhead >= 0:
            h = s.qhead
            s.qhead = c.roots[h].next_waiter
            if s.qhead < 0:
                s.qtail = -1
            sm_faa(&s.nwaiters, -1)
            hr = &c.roots[h]
            if sm_load(&hr.killed):
                pthread_cond_signal(&c.wcv[hr.worker])
                continue
            if not sm_cas(&s.owner, -1, h):
                # a fast-path acquirer stole the lock in the window where
                # nwaiters read zero; put the waiter back at the head and
                # let the thief's own release grant it
                c.roots[h].next_waiter = s.qhead
                s.qhead = h
                if s.qtail < 0:
                    s.qtail = h
                sm_faa(&s.nwaiters, 1)
                break
            sm_store(&hr.granted, 1)
            # a granted-but-unscheduled waiter must not appear in the
            # waits-for graph as waiting on a lock it now owns
            hr.waiting_slot = -1
            pthread_cond_signal(&c.wcv[hr.worker])
            break
    r.held_len = from_idx


# ---------------------------------------------------------------------------
# storage operations

cdef inline int charge(Root* r) noexcept nogil:
    if r.gas_used + 1 > r.gas_limit:
        return RC_OOG
    r.gas_used += 1
    return RC_OK

cdef int oread(Core* c, Root* r, int mode, uint16_t cid, uint16_t vid, TVal* mk, TVal* out) noexcept nogil:
    cdef int rc = charge(r)
    cdef int32_t slot
    cdef Slot* s
    if rc != RC_OK:
        return rc
    slot = find_or_insert(c, cid, vid, mk)
    if slot < 0:
        return RC_FATAL
    s = &c.table[slot]
    if mode == MODE_MINE:
        rc = acquire(c, r, slot)
        if rc != RC_OK:
            return rc
        out[0] = s.val
        ev(c, r, r.cur_action, K_OPREAD, slot, 0)
    elif mode == MODE_REPLAY:
        if c.replay_par:
            sm_spin_lock(&s.spin)
            out[0] = s.val
            sm_spin_unlock(&s.spin)
        else:
            out[0] = s.val
        trace_push(r, slot)
    else:
        out[0] = s.val
    return RC_OK

cdef int owrite(Core* c, Root* r, int mode, uint16_t cid, uint16_t vid, TVal* mk, TVal* v) noexcept nogil:
    cdef int rc = charge(r)
    cdef int32_t slot
    cdef Slot* s
    if rc != RC_OK:
        return rc
    slot = find_or_insert(c, cid, vid, mk)
    if slot < 0:
        return RC_FATAL
    s = &c.table[slot]
    if mode == MODE_MINE:
        rc = acquire(c, r, slot)
        if rc != RC_OK:
            return rc
        log_push(r, slot, &s.val)
        s.val = v[0]
        ev(c, r, r.cur_action, K_OPWRITE, slot, 0)
    elif mode == MODE_REPLAY:
        if c.replay_par:
            sm_spin_lock(&s.spin)
            log_push(r, slot, &s.val)
            s.val = v[0]
            sm_spin_unlock(&s.spin)
        else:
            log_push(r, slot, &s.val)
            s.val = v[0]
        trace_push(r, slot)
    else:
        log_push(r, slot, &s.val)
        s.val = v[0]
    return RC_OK

cdef void undo_to(Core* c, Root* r, int32_t mark, int32_t action, int mode) noexcept nogil:
    """Replay the inverse log newest-first down to a level mark."""
    cdef int32_t i
    cdef LogEnt* e
    cdef Slot* s
    for i in range(r.log_len - 1, mark - 1, -1):
        e = &r.log[i]
        s = &c.table[e.slot]
        if mode == MODE_REPLAY and c.replay_par:
            sm_spin_lock(&s.spin)
            s.val = e.old
            sm_spin_unlock(&s.spin)
        else:
            s.val = e.old
        if mode == MODE_MINE:
            ev(c, r, action, K_UNDO, e.slot, 0)
    r.log_len = mark


# ---------------------------------------------------------------------------
# contract bodies
#
# These transcribe specmine.contracts operation for operation: same
# reads, same writes, same check order, same revert conditions. A
# malformed call (bad arity or argument type) reverts before any
# operation, exactly like a failed ABI decode.

cdef void mk_scalar(TVal* o, const char* name, int n) noexcept nogil:
    o.tag = TAG_BYTES
    o.blen = <uint8_t>n
    o.i = 0
    memcpy(o.b, name, n)

cdef int b_give_right(Core* c, Root* r, int m, LTx* t) noexcept nogil:
    cdef TVal mk, chair, v, one
    cdef int rc
    if t.nargs != 1 or t.args[0].tag != TAG_ADDR:
        return RC_REVERT
    mk_scalar(&mk, "chairperson", 11)
    rc = oread(c, r, m, CID_BALLOT, VID_SCALARS, &mk, &chair)
    if rc != RC_OK:
        return rc
    if not val_eq(&chair, &t.sender):
        return RC_REVERT
    # short-circuit: the voted cell is read only when the sender check passed
    rc = oread(c, r, m, CID_BALLOT, VID_V_VOTED, &t.args[0], &v)
    if rc != RC_OK:
        return rc
    if as_bool(&v):
        return RC_REVERT
    tv_int(&one, 1)
    return owrite(c, r, m, CID_BALLOT, VID_V_WEIGHT, &t.args[0], &one)

cdef int _vote(Core* c, Root* r, int m, int64_t proposal, TVal* sender) noexcept nogil:
    cdef TVal v, tv, mkp, w, cnt
    cdef int rc
    rc = oread(c, r, m, CID_BALLOT, VID_V_VOTED, sender, &v)
    if rc != RC_OK:
        return rc
    if as_bool(&v):
        return RC_REVERT
    tv_bool(&tv, 1)
    rc = owrite(c, r, m, CID_BALLOT, VID_V_VOTED, sender, &tv)
    if rc != RC_OK:
        return rc
    tv_int(&tv, proposal)
    rc = owrite(c, r, m, CID_BALLOT, VID_V_VOTE, sender, &tv)
    if rc != RC_OK:
        return rc
    # the bounds check models the array access itself: free, but the two
    # writes above are already on the undo log if it fails
    if proposal < 0 or proposal >= c.meta_nprop:
        return RC_REVERT
    rc = oread(c, r, m, CID_BALLOT, VID_V_WEIGHT, sender, &w)
    if rc != RC_OK:
        return rc
    tv_int(&mkp, proposal)
    rc = oread(c, r, m, CID_BALLOT, VID_P_COUNT, &mkp, &cnt)
    if rc != RC_OK:
        return rc
    tv_int(&tv, as_int(&cnt) + as_int(&w))
    return owrite(c, r, m, CID_BALLOT, VID_P_COUNT, &mkp, &tv)

cdef int b_vote(Core* c, Root* r, int m, LTx* t) noexcept nogil:
    if t.nargs != 1 or t.args[0].tag != TAG_INT:
        return RC_REVERT
    return _vote(c, r, m, t.args[0].i, &t.sender)

cdef int b_delegate(Core* c, Root* r, int m, LTx* t) noexcept nogil:
    cdef TVal to, nxt, v, tv, mkp, w, tw, cnt
    cdef int64_t dvote
    cdef int rc
    if t.nargs != 1 or t.args[0].tag != TAG_ADDR:
        return RC_REVERT
    to = t.args[0]
    rc = oread(c, r, m, CID_BALLOT, VID_V_VOTED, &t.sender, &v)
    if rc != RC_OK:
        return rc
    if as_bool(&v):
        return RC_REVERT
    if val_eq(&to, &t.sender):
        return RC_REVERT
    # walk the delegation chain; every hop is one charged read, so a cycle
    # that avoids the sender runs until the gas budget kills it
    while True:
        rc = oread(c, r, m, CID_BALLOT, VID_V_DELEGATE, &to, &nxt)
        if rc != RC_OK:
            return rc
        if nxt.tag == TAG_ABSENT:
            break
        to = nxt
        if val_eq(&to, &t.sender):
            return RC_REVERT
    tv_bool(&tv, 1)
    rc = owrite(c, r, m, CID_BALLOT, VID_V_VOTED, &t.sender, &tv)
    if rc != RC_OK:
        return rc
    rc = owrite(c, r, m, CID_BALLOT, VID_V_DELEGATE, &t.sender, &to)
    if rc != RC_OK:
        return rc
    rc = oread(c, r, m, CID_BALLOT, VID_V_VOTED, &to, &v)
    if rc != RC_OK:
        return rc
    if as_bool(&v):
        # target already voted: credit their proposal directly
        rc = oread(c, r, m, CID_BALLOT, VID_V_VOTE, &to, &tv)
        if rc != RC_OK:
            return rc
        dvote = as_int(&tv)
        if dvote < 0 or dvote >= c.meta_nprop:
            return RC_REVERT
        rc = oread(c, r, m, CID_BALLOT, VID_V_WEIGHT, &t.sender, &w)
        if rc != RC_OK:
            return rc
        tv_int(&mkp, dvote)
        rc = oread(c, r, m, CID_BALLOT, VID_P_COUNT, &mkp, &cnt)
        if rc != RC_OK:
            return rc
        tv_int(&tv, as_int(&cnt) + as_int(&w))
        return owrite(c, r, m, CID_BALLOT, VID_P_COUNT, &mkp, &tv)
    rc = oread(c, r, m, CID_BALLOT, VID_V_WEIGHT, &t.sender, &w)
    if rc != RC_OK:
        return rc
    rc = oread(c, r, m, CID_BALLOT, VID_V_WEIGHT, &to, &tw)
    if rc != RC_OK:
        return rc
    tv_int(&tv, as_int(&tw) + as_int(&w))
    return owrite(c, r, m, CID_BALLOT, VID_V_WEIGHT, &to, &tv)

cdef int _bid(Core* c, Root* r, int m, int64_t amount, TVal* sender) noexcept nogil:
    cdef TVal mk, hb, prev, pend, tv
    cdef int64_t hbi
    cdef int rc
    mk_scalar(&mk, "highest_bid", 11)
    rc = oread(c, r, m, CID_AUCTION, VID_SCALARS, &mk, &hb)
    if rc != RC_OK:
        return rc
    hbi = as_int(&hb)
    if amount <= hbi:
        return RC_REVERT
    mk_scalar(&mk, "highest_bidder", 14)
    rc = oread(c, r, m, CID_AUCTION, VID_SCALARS, &mk, &prev)
    if rc != RC_OK:
        return rc
    if prev.tag != TAG_ABSENT:
        rc = oread(c, r, m, CID_AUCTION, VID_PENDING, &prev, &pend)
        if rc != RC_OK:
            return rc
        tv_int(&tv, as_int(&pend) + hbi)
        rc = owrite(c, r, m, CID_AUCTION, VID_PENDING, &prev, &tv)
        if rc != RC_OK:
            return rc
    mk_scalar(&mk, "highest_bidder", 14)
    rc = owrite(c, r, m, CID_AUCTION, VID_SCALARS, &mk, sender)
    if rc != RC_OK:
        return rc
    mk_scalar(&mk, "highest_bid", 11)
    tv_int(&tv, amount)
    return owrite(c, r, m, CID_AUCTION, VID_SCALARS, &mk, &tv)

cdef int a_bid(Core* c, Root* r, int m, LTx* t) noexcept nogil:
    if t.nargs != 0:
        return RC_REVERT
    return _bid(c, r, m, r.lev_value[r.level], &t.sender)

cdef int a_bid_plus_one(Core* c, Root* r, int m, LTx* t) noexcept nogil:
    cdef TVal mk, hb, prev, pend, tv
    cdef int64_t hbi
    cdef int rc
    if t.nargs != 0:
        return RC_REVERT
    mk_scalar(&mk, "highest_bid", 11)
    rc = oread(c, r, m, CID_AUCTION, VID_SCALARS, &mk, &hb)
    if rc != RC_OK:
        return rc
    hbi = as_int(&hb)
    mk_scalar(&mk, "highest_bidder", 14)
    rc = oread(c, r, m, CID_AUCTION, VID_SCALARS, &mk, &prev)
    if rc != RC_OK:
        return rc
    if prev.tag != TAG_ABSENT:
        rc = oread(c, r, m, CID_AUCTION, VID_PENDING, &prev, &pend)
        if rc != RC_OK:
            return rc
        tv_int(&tv, as_int(&pend) + hbi)
        rc = owrite(c, r, m, CID_AUCTION, VID_PENDING, &prev, &tv)
        if rc != RC_OK:
            return rc
    mk_scalar(&mk, "highest_bidder", 14)
    rc = owrite(c, r, m, CID_AUCTION, VID_SCALARS, &mk, &t.sender)
    if rc != RC_OK:
        return rc
    mk_scalar(&mk, "highest_bid", 11)
    tv_int(&tv, hbi + 1)
    return owrite(c, r, m, CID_AUCTION, VID_SCALARS, &mk, &tv)

cdef int _withdraw(Core* c, Root* r, int m, TVal* sender) noexcept nogil:
    cdef TVal pend, bal, tv
    cdef int64_t amount
    cdef int rc
    rc = oread(c, r, m, CID_AUCTION, VID_PENDING, sender, &pend)
    if rc != RC_OK:
        return rc
    amount = as_int(&pend)
    if amount == 0:
        return RC_OK    # nothing owed: commits without further effect
    tv_int(&tv, 0)
    rc = owrite(c, r, m, CID_AUCTION, VID_PENDING, sender, &tv)
    if rc != RC_OK:
        return rc
    rc = oread(c, r, m, CID_AUCTION, VID_BALANCES, sender, &bal)
    if rc != RC_OK:
        return rc
    tv_int(&tv, as_int(&bal) + amount)
    return owrite(c, r, m, CID_AUCTION, VID_BALANCES, sender, &tv)

cdef int a_withdraw(Core* c, Root* r, int m, LTx* t) noexcept nogil:
    if t.nargs != 0:
        return RC_REVERT
    return _withdraw(c, r, m, &t.sender)

cdef int d_create(Core* c, Root* r, int m, LTx* t) noexcept nogil:
    cdef TVal v, tv
    cdef int rc
    if t.nargs != 1 or t.args[0].tag != TAG_BYTES:
        return RC_REVERT
    rc = oread(c, r, m, CID_ETHERDOC, VID_D_EXISTS, &t.args[0], &v)
    if rc != RC_OK:
        return rc
    if as_bool(&v):
        return RC_REVERT
    tv_bool(&tv, 1)
    rc = owrite(c, r, m, CID_ETHERDOC, VID_D_EXISTS, &t.args[0], &tv)
    if rc != RC_OK:
        return rc
    return owrite(c, r, m, CID_ETHERDOC, VID_D_OWNER, &t.args[0], &t.sender)

cdef int d_exists(Core* c, Root* r, int m, LTx* t) noexcept nogil:
    cdef TVal v
    if t.nargs != 1 or t.args[0].tag != TAG_BYTES:
        return RC_REVERT
    return oread(c, r, m, CID_ETHERDOC, VID_D_EXISTS, &t.args[0], &v)

cdef int d_transfer(Core* c, Root* r, int m, LTx* t) noexcept nogil:
    cdef TVal v, owner, cnt, tv
    cdef int rc
    if t.nargs != 2 or t.args[0].tag != TAG_BYTES or t.args[1].tag != TAG_ADDR:
        return RC_REVERT
    rc = oread(c, r, m, CID_ETHERDOC, VID_D_EXISTS, &t.args[0], &v)
    if rc != RC_OK:
        return rc
    if not as_bool(&v):
        return RC_REVERT
    rc = oread(c, r, m, CID_ETHERDOC, VID_D_OWNER, &t.args[0], &owner)
    if rc != RC_OK:
        return rc
    if not val_eq(&owner, &t.sender):
        return RC_REVERT
    rc = owrite(c, r, m, CID_ETHERDOC, VID_D_OWNER, &t.args[0], &t.args[1])
    if rc != RC_OK:
        return rc
    rc = oread(c, r, m, CID_ETHERDOC, VID_OWNED_COUNT, &t.args[1], &cnt)
    if rc != RC_OK:
        return rc
    tv_int(&tv, as_int(&cnt) + 1)
    return owrite(c, r, m, CID_ETHERDOC, VID_OWNED_COUNT, &t.args[1], &tv)

cdef int nested(Core* c, Root* r, int m, int which, int64_t value, LTx* t) noexcept nogil:
    """Run an auction leg as a nested action; a revert inside it is
    undone and absorbed (its locks stay with the transaction)."""
    cdef int32_t lev = r.level + 1
    cdef int32_t child_action = 0
    cdef int rc
    if lev >= MAXLEV:
        return RC_REVERT
    r.lev_held[lev] = r.held_len
    r.lev_log[lev] = r.log_len
    r.lev_value[lev] = value
    if m == MODE_MINE:
        child_action = <int32_t>sm_faa(&c.next_action, 1)
        r.lev_action[lev] = child_action
        r.cur_action = child_action
        ev(c, r, child_action, K_BEGIN, -1, 0)
    r.level = lev
    if which == FID_BID:
        rc = _bid(c, r, m, value, &t.sender)
    else:
        rc = _withdraw(c, r, m, &t.sender)
    r.level = lev - 1
    if m == MODE_MINE:
        r.cur_action = r.lev_action[lev - 1]
    if rc == RC_OK:
        if m == MODE_MINE:
            ev(c, r, child_action, K_COMMIT, -1, 0)
        return RC_OK
    if rc == RC_REVERT:
        undo_to(c, r, r.lev_log[lev], child_action, m)
        if m == MODE_MINE:
            ev(c, r, child_action, K_ABSORB, -1, 0)
        return RC_OK          # caught by the caller, which continues
    if rc == RC_OOG:
        undo_to(c, r, r.lev_log[lev], child_action, m)
        if m == MODE_MINE:
            ev(c, r, child_action, K_ABSORB, -1, 0)
        return RC_OOG
    if rc == RC_KILLED:
        pthread_mutex_lock(&c.G)
        undo_to(c, r, r.lev_log[lev], child_action, m)
        ev(c, r, child_action, K_ABORT, -1, 0)
        release_from(c, r, r.lev_held[lev], child_action)
        pthread_mutex_unlock(&c.G)
        return RC_KILLED
    return rc

cdef int combo_vote_then_bid(Core* c, Root* r, int m, LTx* t) noexcept nogil:
    cdef int rc
    if t.nargs != 2 or t.args[0].tag != TAG_INT or t.args[1].tag != TAG_INT:
        return RC_REVERT
    if t.args[1].i < 0:
        return RC_REVERT
    rc = nested(c, r, m, FID_BID, t.args[1].i, t)
    if rc != RC_OK:
        return rc
    return _vote(c, r, m, t.args[0].i, &t.sender)

cdef int combo_vote_then_withdraw(Core* c, Root* r, int m, LTx* t) noexcept nogil:
    cdef int rc
    if t.nargs != 1 or t.args[0].tag != TAG_INT:
        return RC_REVERT
    rc = nested(c, r, m, FID_WITHDRAW, 0, t)
    if rc != RC_OK:
        return rc
    return _vote(c, r, m, t.args[0].i, &t.sender)

cdef int dispatch(Core* c, Root* r, int m, LTx* t) noexcept nogil:
    if t.fid == FID_GIVE_RIGHT:
        return b_give_right(c, r, m, t)
    if t.fid == FID_VOTE:
        return b_vote(c, r, m, t)
    if t.fid == FID_DELEGATE:
        return b_delegate(c, r, m, t)
    if t.fid == FID_BID:
        return a_bid(c, r, m, t)
    if t.fid == FID_BID_PLUS_ONE:
        return a_bid_plus_one(c, r, m, t)
    if t.fid == FID_WITHDRAW:
        return a_withdraw(c, r, m, t)
    if t.fid == FID_CREATE:
        return d_create(c, r, m, t)
    if t.fid == FID_EXISTS:
        return d_exists(c, r, m, t)
    if t.fid == FID_TRANSFER:
        return d_transfer(c, r, m, t)
    if t.fid == FID_VOTE_THEN_BID:
        return combo_vote_then_bid(c, r, m, t)
    if t.fid == FID_VOTE_THEN_WITHDRAW:
        return combo_vote_then_withdraw(c, r, m, t)
    return RC_REVERT          # unknown function


# ---------------------------------------------------------------------------
# transaction drivers

cdef void root_reset(Root* r, LTx* t, int32_t idx, int32_t worker) noexcept nogil:
    r.idx = idx
    r.worker = worker
    r.gas_used = 0
    r.gas_limit = t.gas_limit
    r.sender = t.sender
    sm_store(&r.killed, 0)
    sm_store(&r.granted, 0)
    r.waiting_slot = -1
    r.next_waiter = -1
    r.level = 0
    r.lev_held[0] = 0
    r.lev_log[0] = 0
    r.lev_value[0] = t.value
    r.held_len = 0
    r.log_len = 0
    r.trace_len = 0

cdef void publish_profile(Core* c, Root* r) noexcept nogil:
    """Advance per-key counters and record (slot, counter) pairs. G held."""
    cdef int32_t i
    cdef Slot* s
    cdef int32_t cap
    if r.prof_slots != NULL:
        free(r.prof_slots)
        free(r.prof_cnts)
    r.prof_len = r.held_len
    cap = r.prof_len if r.prof_len > 0 else 1
    r.prof_slots = <int32_t*>malloc(cap * sizeof(int32_t))
    r.prof_cnts = <uint32_t*>malloc(cap * sizeof(uint32_t))
    for i in range(r.held_len):
        s = &c.table[r.held[i]]
        s.counter += 1
        r.prof_slots[i] = r.held[i]
        r.prof_cnts[i] = s.counter

cdef void run_tx_mine(Core* c, int32_t i, int32_t worker) noexcept nogil:
    cdef LTx* t = &c.txs[i]
    cdef Root* r = &c.roots[i]
    cdef int32_t aid
    cdef int rc
    r.retries = 0
    while True:
        root_reset(r, t, i, worker)
        aid = <int32_t>sm_faa(&c.next_action, 1)
        r.lev_action[0] = aid
        r.cur_action = aid
        ev(c, r, aid, K_BEGIN, -1, 0)
        rc = dispatch(c, r, MODE_MINE, t)
        if rc == RC_OK:
            pthread_mutex_lock(&c.G)
            publish_profile(c, r)
            ev(c, r, aid, K_COMMIT, -1, 0)
            release_from(c, r, 0, aid)
            pthread_mutex_unlock(&c.G)
            r.status = ST_COMMITTED
            return
        if rc == RC_REVERT or rc == RC_OOG:
            pthread_mutex_lock(&c.G)
            undo_to(c, r, 0, aid, MODE_MINE)
            publish_profile(c, r)
            ev(c, r, aid, K_REVERT if rc == RC_REVERT else K_OOG, -1, 0)
            release_from(c, r, 0, aid)
            pthread_mutex_unlock(&c.G)
            r.status = ST_REVERTED if rc == RC_REVERT else ST_OUT_OF_GAS
            return
        if rc == RC_FATAL:
            # table overflow: unwind so no other worker hangs on our locks,
            # then let the caller surface a RuntimeError
            pthread_mutex_lock(&c.G)
            undo_to(c, r, 0, aid, MODE_MINE)
            release_from(c, r, 0, aid)
            pthread_mutex_unlock(&c.G)
            r.status = ST_REVERTED
            return
        # system abort: undo, release with no counters, recharge, retry
        pthread_mutex_lock(&c.G)
        undo_to(c, r, 0, aid, MODE_MINE)
        ev(c, r, aid, K_ABORT, -1, 0)
        release_from(c, r, 0, aid)
        pthread_mutex_unlock(&c.G)
        r.retries += 1

cdef void run_tx_plain(Core* c, int32_t i, int mode) noexcept nogil:
    """Serial or replay execution: no locks, undo only on failure."""
    cdef LTx* t = &c.txs[i]
    cdef Root* r = &c.roots[i]
    cdef int rc
    r.retries = 0
    root_reset(r, t, i, 0)
    rc = dispatch(c, r, mode, t)
    if rc == RC_OK:
        r.status = ST_COMMITTED
        r.log_len = 0
        return
    undo_to(c, r, 0, 0, mode)
    if rc == RC_REVERT or rc == RC_FATAL:
        r.status = ST_REVERTED
    else:
        r.status = ST_OUT_OF_GAS


# ---------------------------------------------------------------------------
# worker pool and job loops

cdef void mine_loop(Core* c, int32_t worker) noexcept nogil:
    cdef long i
    while True:
        i = sm_faa(&c.cursor, 1)
        if i >= c.ntxs:
            return
        run_tx_mine(c, <int32_t>i, worker)

cdef void rheap_push(Core* c, int32_t v) noexcept nogil:
    cdef int32_t i = c.rheaplen
    cdef int32_t parent
    c.rheap[i] = v
    c.rheaplen += 1
    while i > 0:
        parent = (i - 1) >> 1
        if c.rheap[parent] <= c.rheap[i]:
            break
        c.rheap[parent], c.rheap[i] = c.rheap[i], c.rheap[parent]
        i = parent

cdef int32_t rheap_pop(Core* c) noexcept nogil:
    cdef int32_t top = c.rheap[0]
    cdef int32_t i = 0
    cdef int32_t l, rr, small
    c.rheaplen -= 1
    c.rheap[0] = c.rheap[c.rheaplen]
    while True:
        l = 2 * i + 1
        rr = l + 1
        small = i
        if l < c.rheaplen and c.rheap[l] < c.rheap[small]:
            small = l
        if rr < c.rheaplen and c.rheap[rr] < c.rheap[small]:
            small = rr
        if small == i:
            return top
        c.rheap[i], c.rheap[small] = c.rheap[small], c.rheap[i]
        i = small

cdef void replay_loop(Core* c, int32_t worker) noexcept nogil:
    cdef int32_t i, s
    cdef int32_t k
    while True:
        pthread_mutex_lock(&c.repmu)
        while c.rheaplen == 0 and c.rdone < c.ntxs:
            pthread_cond_wait(&c.repcv, &c.repmu)
        if c.rheaplen == 0 and c.rdone >= c.ntxs:
            pthread_mutex_unlock(&c.repmu)
            return
        i = rheap_pop(c)
        pthread_mutex_unlock(&c.repmu)
        run_tx_plain(c, i, MODE_REPLAY)
        pthread_mutex_lock(&c.repmu)
        c.rdone += 1
        for k in range(c.succ_off[i], c.succ_off[i + 1]):
            s = c.succ_dat[k]
            c.indeg[s] -= 1
            if c.indeg[s] == 0:
                rheap_push(c, s)
        pthread_cond_broadcast(&c.repcv)
        pthread_mutex_unlock(&c.repmu)

cdef void* _worker_entry(void* arg) noexcept nogil:
    cdef WorkerArg* wa = <WorkerArg*>arg
    cdef Core* c = wa.core
    cdef int32_t w = wa.wid
    cdef long seen = 0
    cdef int mode
    while True:
        pthread_mutex_lock(&c.jobmu)
        while c.job_id == seen and not c.shutdown:
            pthread_cond_wait(&c.jobcv, &c.jobmu)
        if c.shutdown:
            pthread_mutex_unlock(&c.jobmu)
            return NULL
        seen = c.job_id
        mode = c.job_mode
        pthread_mutex_unlock(&c.jobmu)
        if mode == MODE_MINE:
            mine_loop(c, w)
        else:
            replay_loop(c, w)
        pthread_mutex_lock(&c.jobmu)
        c.jdone += 1
        if c.jdone >= c.nworkers:
            pthread_cond_signal(&c.donecv)
        pthread_mutex_unlock(&c.jobmu)

cdef void run_job(Core* c, int mode) noexcept nogil:
    pthread_mutex_lock(&c.jobmu)
    c.job_mode = mode
    c.jdone = 0
    c.job_id += 1
    pthread_cond_broadcast(&c.jobcv)
    while c.jdone < c.nworkers:
        pthread_cond_wait(&c.donecv, &c.jobmu)
    pthread_mutex_unlock(&c.jobmu)


# ---------------------------------------------------------------------------
# the Python-facing store

cdef int64_t _pow2_at_least(int64_t n):
    cdef int64_t cap = 4096
    while cap < n:
        cap <<= 1
    return cap


cdef class CoreStore:
    """Loaded state plus the machinery to execute blocks against it."""

    cdef Core* c
    cdef readonly int workers
    cdef list _contracts
    cdef dict _contract_ids
    cdef list _variables
    cdef dict _variable_ids
    cdef dict _slot_keys
    cdef WorkerArg* _wargs

    def __cinit__(self, dict state, int workers=1, bint record_events=False):
        cdef Core* c = <Core*>calloc(1, sizeof(Core))
        cdef int64_t cap
        cdef int32_t w
        if c == NULL:
            raise MemoryError()
        self.c = c
        if workers > 64:
            raise UsageError("at most 64 workers")  # deadlock scratch bound
        self.workers = max(1, workers)
        self._contracts = list(KNOWN_CONTRACTS)
        self._contract_ids = {name: i for i, name in enumerate(self._contracts)}
        self._variables = list(KNOWN_VARIABLES)
        self._variable_ids = {name: i for i, name in enumerate(self._variables)}
        self._slot_keys = {}
        self._wargs = NULL

        cap = _pow2_at_least(2 * len(state) + 16384)
        c.table = <Slot*>calloc(cap, sizeof(Slot))
        if c.table == NULL:
            raise MemoryError()
        c.tcap = cap
        c.record = 1 if record_events else 0
        pthread_mutex_init(&c.tablemu, NULL)
        pthread_mutex_init(&c.G, NULL)
        pthread_mutex_init(&c.jobmu, NULL)
        pthread_mutex_init(&c.repmu, NULL)
        pthread_cond_init(&c.jobcv, NULL)
        pthread_cond_init(&c.donecv, NULL)
        pthread_cond_init(&c.repcv, NULL)

        c.nworkers = self.workers if self.workers > 1 else 0
        c.nevbuf = max(1, c.nworkers)
        c.evbuf = <EventBuf*>calloc(c.nevbuf, sizeof(EventBuf))
        c.wcv = <pthread_cond_t*>calloc(max(1, c.nworkers), sizeof(pthread_cond_t))
        for w in range(max(1, c.nworkers)):
            pthread_cond_init(&c.wcv[w], NULL)

        self._load_state(state)

        if c.nworkers > 0:
            c.threads = <pthread_t*>calloc(c.nworkers, sizeof(pthread_t))
            self._wargs = <WorkerArg*>calloc(c.nworkers, sizeof(WorkerArg))
            for w in range(c.nworkers):
                self._wargs[w].core = c
                self._wargs[w].wid = w
                if pthread_create(&c.threads[w], NULL, _worker_entry, &self._wargs[w]) != 0:
                    raise RuntimeError("could not start a worker thread")

    def __dealloc__(self):
        cdef Core* c = self.c
        cdef int32_t w, i
        if c == NULL:
            return
        if c.threads != NULL:
            pthread_mutex_lock(&c.jobmu)
            c.shutdown = 1
            pthread_cond_broadcast(&c.jobcv)
            pthread_mutex_unlock(&c.jobmu)
            for w in range(c.nworkers):
                pthread_join(c.threads[w], NULL)
            free(c.threads)
        if self._wargs != NULL:
            free(self._wargs)
        if c.roots != NULL:
            for i in range(c.nroots):
                free(c.roots[i].held)
                free(c.roots[i].log)
                free(c.roots[i].trace)
                free(c.roots[i].prof_slots)
                free(c.roots[i].prof_cnts)
            free(c.roots)
        if c.evbuf != NULL:
            for i in range(c.nevbuf):
                free(c.evbuf[i].ev)
            free(c.evbuf)
        if c.wcv != NULL:
            free(c.wcv)
        free(c.txs)
        free(c.vstate)
        free(c.vpath)
        free(c.vneigh)
        free(c.indeg)
        free(c.rheap)
        free(c.succ_off)
        free(c.succ_dat)
        free(c.table)
        free(c)
        self.c = NULL

    # -- conversion helpers ------------------------------------------------

    cdef int _lower_value(self, object v, TVal* out) except -1:
        cdef bytes raw
        if v is None:
            tv_none(out)
        elif isinstance(v, bool):
            tv_bool(out, 1 if v else 0)
        elif isinstance(v, Address):
            raw = bytes(v)
            out.tag = TAG_ADDR
            out.blen = 20
            out.i = 0
            memcpy(out.b, <char*>raw, 20)
        elif isinstance(v, bytes):
            if len(v) > MAXB:
                raise ValueError("byte string longer than %d bytes" % MAXB)
            raw = v
            out.tag = TAG_BYTES
            out.blen = <uint8_t>len(raw)
            out.i = 0
            if out.blen:
                memcpy(out.b, <char*>raw, out.blen)
        elif isinstance(v, int):
            if not (-(2**63) <= v <= 2**63 - 1):
                raise ValueError("integer out of 64-bit range")
            tv_int(out, v)
        else:
            raise TypeError("not a storable value: %r" % (v,))
        return 0

    cdef object _raise_value(self, TVal* v):
        if v.tag == TAG_ABSENT:
            return None
        if v.tag == TAG_INT:
            return <object>(v.i)
        if v.tag == TAG_BOOL:
            return v.i != 0
        if v.tag == TAG_ADDR:
            return Address(v.b[:20])
        return v.b[:v.blen]

    cdef uint16_t _intern_contract(self, str name) except? 0xFFFF:
        cdef object cid = self._contract_ids.get(name)
        if cid is None:
            cid = len(self._contracts)
            if cid >= 0xFFFF:
                raise UsageError("too many distinct contract names")
            self._contracts.append(name)
            self._contract_ids[name] = cid
        return <uint16_t>cid

    cdef uint16_t _intern_variable(self, str name) except? 0xFFFF:
        cdef object vid = self._variable_ids.get(name)
        if vid is None:
            vid = len(self._variables)
            if vid >= 0xFFFF:
                raise UsageError("too many distinct variable names")
            self._variables.append(name)
            self._variable_ids[name] = vid
        return <uint16_t>vid

    cdef _load_state(self, dict state):
        cdef Core* c = self.c
        cdef TVal mk, val
        cdef int32_t slot
        cdef uint16_t cid, vid
        meta_nprop = None
        for key, value in state.items():
            cid = self._intern_contract(key.contract)
            vid = self._intern_variable(key.variable)
            self._lower_value(key.map_key, &mk)
            self._lower_value(value, &val)
            slot = find_or_insert(c, cid, vid, &mk)
            if slot < 0:
                raise MemoryError("key table full while loading state")
            c.table[slot].val = val
            if (
                key.contract == "ballot"
                and key.variable == "@meta"
                and key.map_key == b"proposal_count"
            ):
                meta_nprop = value
        # layout constant: reads are free and unlocked during execution
        c.meta_nprop = meta_nprop if isinstance(meta_nprop, int) and not isinstance(meta_nprop, bool) else 0

    cdef _key_of_slot(self, int32_t slot):
        key = self._slot_keys.get(slot)
        cdef Slot* s
        if key is None:
            s = &self.c.table[slot]
            key = StorageKey(
                self._contracts[s.cid],
                self._variables[s.vid],
                self._raise_value(&s.mk),
            )
            self._slot_keys[slot] = key
        return key

    cdef _lower_txs(self, list txs):
        cdef Core* c = self.c
        cdef LTx* t
        cdef int32_t i, j
        cdef int n = len(txs)
        free(c.txs)
        c.txs = <LTx*>calloc(max(1, n), sizeof(LTx))
        c.ntxs = n
        for i, tx in enumerate(txs):
            t = &c.txs[i]
            t.cid = self._intern_contract(tx.contract)
            fid = FUNCTION_IDS.get((t.cid, tx.function), FID_UNKNOWN)
            args = tx.args
            if len(args) > MAXARGS:
                fid = FID_UNKNOWN   # cannot match any known arity: reverts
            else:
                t.nargs = len(args)
                for j, a in enumerate(args):
                    try:
                        self._lower_value(a, &t.args[j])
                    except (TypeError, ValueError):
                        # outside the storable value domain: the call
                        # reverts before its first operation, exactly
                        # like any other malformed argument
                        fid = FID_UNKNOWN
                        break
            t.fid = fid
            self._lower_value(tx.msg.sender, &t.sender)
            t.value = tx.msg.value
            t.gas_limit = tx.msg.gas_limit
        self._ensure_roots(n)

    cdef _ensure_roots(self, int n):
        cdef Core* c = self.c
        cdef int32_t i
        if c.nroots >= n:
            return
        c.roots = <Root*>realloc(c.roots, max(1, n) * sizeof(Root))
        memset(&c.roots[c.nroots], 0, (n - c.nroots) * sizeof(Root))
        for i in range(c.nroots, n):
            c.roots[i].waiting_slot = -1
            c.roots[i].next_waiter = -1
        c.nroots = n
        free(c.vstate)
        free(c.vpath)
        free(c.vneigh)
        c.vstate = <int8_t*>calloc(max(1, n), sizeof(int8_t))
        c.vpath = <int32_t*>calloc(max(1, n), sizeof(int32_t))
        c.vneigh = <int32_t*>calloc(max(1, n), sizeof(int32_t))

    cdef _check_health(self):
        if self.c.overflow:
            raise RuntimeError("compiled core key table overflowed")

    # -- runs ----------------------------------------------------------------

    def run_serial(self, list txs):
        cdef Core* c = self.c
        cdef int32_t i
        self._lower_txs(txs)
        with nogil:
            for i in range(c.ntxs):
                run_tx_plain(c, i, MODE_SERIAL)
        self._check_health()
        return [c.roots[i].status for i in range(c.ntxs)]

    def run_mine(self, list txs):
        cdef Core* c = self.c
        cdef int32_t i
        cdef int64_t k
        self._lower_txs(txs)
        # fresh use counters: schedules are per block
        for k in range(c.tcap):
            if sm_load(&c.table[k].state) == 1:
                c.table[k].counter = 0
        c.cursor = 0
        if self.workers == 1 or c.ntxs <= 1:
            with nogil:
                for i in range(c.ntxs):
                    run_tx_mine(c, i, 0)
        else:
            with nogil:
                run_job(c, MODE_MINE)
        self._check_health()
        statuses = [c.roots[i].status for i in range(c.ntxs)]
        retries = [c.roots[i].retries for i in range(c.ntxs)]
        profiles = []
        for i in range(c.ntxs):
            prof = {}
            for k in range(c.roots[i].prof_len):
                prof[self._key_of_slot(c.roots[i].prof_slots[k])] = c.roots[i].prof_cnts[k]
            profiles.append(prof)
        return statuses, profiles, retries

    def run_replay(self, list txs, list preds):
        cdef Core* c = self.c
        cdef int32_t i, total
        cdef int32_t n = len(txs)
        self._lower_txs(txs)
        free(c.indeg)
        free(c.rheap)
        free(c.succ_off)
        free(c.succ_dat)
        c.indeg = <int32_t*>calloc(max(1, n), sizeof(int32_t))
        c.rheap = <int32_t*>calloc(max(1, n), sizeof(int32_t))
        c.succ_off = <int32_t*>calloc(n + 1, sizeof(int32_t))
        total = 0
        for i in range(n):
            total += len(preds[i])
        c.succ_dat = <int32_t*>calloc(max(1, total), sizeof(int32_t))
        counts = [0] * n
        for v in range(n):
            for u in preds[v]:
                counts[u] += 1
        cdef int32_t acc = 0
        for i in range(n):
            c.succ_off[i] = acc
            acc += counts[i]
        c.succ_off[n] = acc
        fill = [c.succ_off[i] for i in range(n)]
        for v in range(n):
            c.indeg[v] = len(preds[v])
            for u in preds[v]:
                c.succ_dat[fill[u]] = v
                fill[u] += 1
        c.rheaplen = 0
        c.rdone = 0
        for i in range(n):
            if c.indeg[i] == 0:
                rheap_push(c, i)
        c.replay_par = 1 if (self.workers > 1 and n > 1) else 0
        cdef int32_t k
        if self.workers == 1 or n <= 1:
            with nogil:
                while c.rheaplen > 0:
                    i = rheap_pop(c)
                    run_tx_plain(c, i, MODE_REPLAY)
                    c.rdone += 1
                    for k in range(c.succ_off[i], c.succ_off[i + 1]):
                        c.indeg[c.succ_dat[k]] -= 1
                        if c.indeg[c.succ_dat[k]] == 0:
                            rheap_push(c, c.succ_dat[k])
        else:
            with nogil:
                run_job(c, MODE_REPLAY)
        self._check_health()
        statuses = [c.roots[i].status for i in range(c.ntxs)]
        traces = []
        for i in range(c.ntxs):
            seen = {}
            for k in range(c.roots[i].trace_len):
                seen.setdefault(self._key_of_slot(c.roots[i].trace[k]))
            traces.append(list(seen))
        return statuses, traces

    # -- inspection ----------------------------------------------------------

    def snapshot(self):
        cdef Core* c = self.c
        cdef int64_t i
        out = {}
        for i in range(c.tcap):
            if sm_load(&c.table[i].state) == 1 and c.table[i].val.tag != TAG_ABSENT:
                out[self._key_of_slot(<int32_t>i)] = self._raise_value(&c.table[i].val)
        return out

    def events(self):
        """All recorded events as (seq, worker, tx, action, kind, key, aux)."""
        cdef Core* c = self.c
        cdef int32_t w
        cdef int64_t k
        cdef CEvent* e
        rows = []
        for w in range(c.nevbuf):
            for k in range(c.evbuf[w].len):
                e = &c.evbuf[w].ev[k]
                rows.append(
                    (
                        e.seq,
                        e.worker,
                        e.tx,
                        e.action,
                        EVENT_KINDS[e.kind],
                        self._key_of_slot(e.slot) if e.slot >= 0 else None,
                        e.aux if e.kind == K_VICTIM else None,
                    )
                )
        rows.sort()
        return rows
