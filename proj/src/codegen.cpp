#include "ifc/codegen.hpp"

#include <stdexcept>

namespace ifc {

namespace {

Instr I(Op op, std::int64_t imm = 0) { return {op, imm}; }

std::int64_t len(const CodeSeq& c) { return static_cast<std::int64_t>(c.size()); }

CodeSeq repeat(const CodeSeq& c, int n) {
    CodeSeq out;
    for (int i = 0; i < n; ++i) out = out + c;
    return out;
}

}  // namespace

CodeSeq operator+(CodeSeq a, const CodeSeq& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

CodeSeq gen_true() { return {I(Op::Push, 1)}; }
CodeSeq gen_false() { return {I(Op::Push, 0)}; }
CodeSeq gen_pop() { return {I(Op::Bnz, 1)}; }
CodeSeq gen_and() { return gen_if({}, gen_pop() + gen_false()); }
CodeSeq gen_or() { return gen_if(gen_pop() + gen_true(), {}); }
CodeSeq gen_not() { return gen_if(gen_false(), gen_true()); }
CodeSeq gen_impl() { return gen_not() + gen_or(); }
CodeSeq gen_some(const CodeSeq& c) { return c + gen_true(); }
CodeSeq gen_none() { return gen_false(); }
CodeSeq gen_equal() { return CodeSeq{I(Op::Sub)} + gen_not(); }

CodeSeq gen_load_from(std::int64_t addr) {
    if (addr == 0) return {I(Op::PushCachePtr), I(Op::Load)};
    return {I(Op::PushCachePtr), I(Op::Push, addr), I(Op::Add), I(Op::Load)};
}

CodeSeq gen_store_at(std::int64_t addr) {
    return {I(Op::PushCachePtr), I(Op::Push, addr), I(Op::Add), I(Op::Store)};
}

CodeSeq gen_dup(std::int64_t i) { return {I(Op::Dup, i)}; }
CodeSeq gen_swap(std::int64_t i) { return {I(Op::Swap, i)}; }

CodeSeq gen_skip_if(std::int64_t n) { return {I(Op::Bnz, n + 1)}; }
CodeSeq gen_skip(std::int64_t n) { return gen_true() + gen_skip_if(n); }

CodeSeq gen_if(const CodeSeq& t, const CodeSeq& f) {
    CodeSeq f2 = f + gen_skip(len(t));
    return gen_skip_if(len(f2)) + f2 + t;
}

CodeSeq gen_indexed_cases(const CodeSeq& dflt,
                          const std::function<CodeSeq(std::int64_t)>& guard,
                          const std::function<CodeSeq(std::int64_t)>& body,
                          const std::vector<std::int64_t>& indices) {
    CodeSeq out = dflt;
    for (auto it = indices.rbegin(); it != indices.rend(); ++it)
        out = guard(*it) + gen_if(body(*it), out);
    return out;
}

CodeSeq gen_loop(const CodeSeq& c) {
    return c + CodeSeq{I(Op::Dup, 0), I(Op::Bnz, -(len(c) + 1))};
}

CodeSeq gen_for(const CodeSeq& body) {
    CodeSeq step = body + CodeSeq{I(Op::Push, -1), I(Op::Add)};
    return CodeSeq{I(Op::Dup, 0)} + gen_if(gen_loop(step), {});
}

CodeSeq gen_elab(const LExpr& e, const LatticeCode& lc) {
    switch (e.kind()) {
        case LExpr::Kind::Bot: return lc.bot;
        case LExpr::Kind::Join: return gen_elab(e.rhs(), lc) + gen_elab(e.lhs(), lc) + lc.join;
        case LExpr::Kind::Var: break;
    }
    switch (e.var()) {
        case LabelVar::Pc: return gen_load_from(CacheAddr::tag_pc);
        case LabelVar::L1: return gen_load_from(CacheAddr::tag1);
        case LabelVar::L2: return gen_load_from(CacheAddr::tag2);
        case LabelVar::L3: return gen_load_from(CacheAddr::tag3);
    }
    return {};
}

CodeSeq gen_bool(const BExpr& b, const LatticeCode& lc) {
    switch (b.kind()) {
        case BExpr::Kind::True: return gen_true();
        case BExpr::Kind::Flows:
            return gen_elab(b.flow_rhs(), lc) + gen_elab(b.flow_lhs(), lc) + lc.flows;
        case BExpr::Kind::And: return gen_bool(b.rhs(), lc) + gen_bool(b.lhs(), lc) + gen_and();
        case BExpr::Kind::Or: return gen_bool(b.rhs(), lc) + gen_bool(b.lhs(), lc) + gen_or();
    }
    return {};
}

CodeSeq gen_match_op(Opcode op) {
    return CodeSeq{I(Op::Push, code(op))} + gen_load_from(CacheAddr::op) + gen_equal();
}

CodeSeq gen_apply_rule(const SymRule& r, const LatticeCode& lc) {
    CodeSeq er = r.er ? gen_elab(*r.er, lc) : lc.bot;
    return gen_bool(r.allow, lc) + gen_if(gen_some(gen_elab(r.erpc, lc) + er), gen_none());
}

CodeSeq gen_compute_results(const RuleTable& t, const LatticeCode& lc) {
    std::vector<std::int64_t> ops;
    for (Opcode op : rule_opcodes())
        if (t.rule(op)) ops.push_back(code(op));
    return gen_indexed_cases(
        {}, [](std::int64_t op) { return gen_match_op(static_cast<Opcode>(op)); },
        [&](std::int64_t op) { return gen_apply_rule(*t.rule(static_cast<Opcode>(op)), lc); },
        ops);
}

CodeSeq gen_store_results() {
    return gen_if(gen_store_at(CacheAddr::tag_r) + gen_store_at(CacheAddr::tag_rpc) + gen_true(),
                  gen_false());
}

Program gen_fault_handler(const RuleTable& t, const LatticeCode& lc) {
    return gen_compute_results(t, lc) + gen_store_results() +
           gen_if({I(Op::Ret)}, {I(Op::Push, -1), I(Op::Jump)});
}

// Principal-set tags point to kernel arrays [n, p1, ..., pn].

namespace {

CodeSeq prinset_bot() { return {I(Op::Push, 0), I(Op::Push, 1), I(Op::Alloc)}; }

// [a, b] -> [c] with c = a's elements followed by those of b's elements not
// already in c. The frame may be longer than the array it holds.
CodeSeq prinset_join() {
    CodeSeq lengths = {I(Op::Dup, 0), I(Op::Load), I(Op::Dup, 2), I(Op::Load),
                       I(Op::Dup, 1), I(Op::Dup, 1), I(Op::Add)};
    // [s, lb, la, a, b] -> [c, s, lb, la, a, b]
    CodeSeq fresh = {I(Op::Push, 0), I(Op::Dup, 1), I(Op::Push, 1), I(Op::Add), I(Op::Alloc)};
    CodeSeq copy_a = CodeSeq{I(Op::Dup, 3)} +
                     gen_for({I(Op::Dup, 5), I(Op::Dup, 1), I(Op::Add), I(Op::Load),
                              I(Op::Dup, 2), I(Op::Dup, 2), I(Op::Add), I(Op::Store)}) +
                     CodeSeq{I(Op::Pop)};
    // [c, s, lb, la, a, b] -> [c, n, lb, la, a, b] with n = la
    CodeSeq count = {I(Op::Swap, 1), I(Op::Pop), I(Op::Dup, 2), I(Op::Swap, 1)};
    // [k, m, x, j, c, n, ...]: m |= (c[k] == x)
    CodeSeq member = CodeSeq{I(Op::Dup, 4), I(Op::Dup, 1), I(Op::Add), I(Op::Load),
                             I(Op::Dup, 3)} +
                     gen_equal() + CodeSeq{I(Op::Dup, 2)} + gen_or() +
                     CodeSeq{I(Op::Swap, 2), I(Op::Pop)};
    // [x, j, c, n, ...] -> [j, c, n + 1, ...] with c[n + 1] = x
    CodeSeq append = {I(Op::Dup, 3), I(Op::Push, 1), I(Op::Add), I(Op::Dup, 3), I(Op::Dup, 1),
                      I(Op::Add), I(Op::Dup, 2), I(Op::Swap, 1), I(Op::Store), I(Op::Swap, 4),
                      I(Op::Pop), I(Op::Pop)};
    // [j, c, n, lb, la, a, b]
    CodeSeq copy_b = CodeSeq{I(Op::Dup, 2)} +
                     gen_for(CodeSeq{I(Op::Dup, 6), I(Op::Dup, 1), I(Op::Add), I(Op::Load),
                                     I(Op::Push, 0), I(Op::Dup, 4)} +
                             gen_for(member) + CodeSeq{I(Op::Pop)} +
                             gen_if({I(Op::Pop)}, append)) +
                     CodeSeq{I(Op::Pop)};
    CodeSeq finish = CodeSeq{I(Op::Dup, 1), I(Op::Dup, 1), I(Op::Store)} +
                     repeat({I(Op::Swap, 1), I(Op::Pop)}, 5);
    return lengths + fresh + copy_a + count + copy_b + finish;
}

// [a, b] -> [1] when every element of a occurs in b, else [0].
CodeSeq prinset_flows() {
    CodeSeq inner = CodeSeq{I(Op::Dup, 6), I(Op::Dup, 1), I(Op::Add), I(Op::Load), I(Op::Dup, 3)} +
                    gen_equal() + CodeSeq{I(Op::Dup, 2)} + gen_or() +
                    CodeSeq{I(Op::Swap, 2), I(Op::Pop)};
    CodeSeq outer = CodeSeq{I(Op::Dup, 2), I(Op::Dup, 1), I(Op::Add), I(Op::Load),
                            I(Op::Push, 0), I(Op::Dup, 5), I(Op::Load)} +
                    gen_for(inner) + CodeSeq{I(Op::Pop), I(Op::Dup, 3)} + gen_and() +
                    CodeSeq{I(Op::Swap, 3), I(Op::Pop), I(Op::Pop)};
    return CodeSeq{I(Op::Push, 1), I(Op::Dup, 1), I(Op::Load)} + gen_for(outer) +
           CodeSeq{I(Op::Pop)} + repeat({I(Op::Swap, 1), I(Op::Pop)}, 2);
}

}  // namespace

ConcreteLattice<TwoPoint> two_point_clattice() {
    ConcreteLattice<TwoPoint> cl;
    cl.name = "two";
    cl.code = {gen_false(), gen_or(), gen_impl()};
    cl.encode = [](const TwoPoint& l, CMemory&) { return Tag::integer(l.is_top() ? 1 : 0); };
    cl.decode = [](const Tag& t, const CMemory&) -> std::optional<TwoPoint> {
        if (!t.is_int()) return std::nullopt;
        if (t.as_int() == 0) return TwoPoint::bot();
        if (t.as_int() == 1) return TwoPoint::top();
        return std::nullopt;
    };
    return cl;
}

ConcreteLattice<PrinSet> prinset_clattice() {
    ConcreteLattice<PrinSet> cl;
    cl.name = "set";
    cl.code = {prinset_bot(), prinset_join(), prinset_flows()};
    cl.encode = [](const PrinSet& l, CMemory& mem) {
        const auto& ps = l.elements();
        auto id = mem.alloc(Priv::Kernel, ps.size() + 1, katom(0));
        mem.store({id, 0}, katom(static_cast<std::int64_t>(ps.size())));
        for (std::size_t i = 0; i < ps.size(); ++i)
            mem.store({id, static_cast<std::int64_t>(i + 1)}, katom(ps[i]));
        return Tag::pointer(id, 0);
    };
    cl.decode = [](const Tag& t, const CMemory& mem) -> std::optional<PrinSet> {
        if (!t.is_ptr()) return std::nullopt;
        const auto& p = t.as_ptr();
        if (p.frame.region != Priv::Kernel || p.frame == kCacheFrame) return std::nullopt;
        const auto* f = mem.frame(p.frame);
        if (!f || p.offset < 0 || static_cast<std::size_t>(p.offset) >= f->size())
            return std::nullopt;
        const auto base = static_cast<std::size_t>(p.offset);
        const Tag& n = (*f)[base].value;
        if (!n.is_int() || n.as_int() < 0 ||
            static_cast<std::uint64_t>(n.as_int()) > f->size() - base - 1)
            return std::nullopt;
        std::vector<Principal> ps;
        for (std::int64_t i = 1; i <= n.as_int(); ++i) {
            const Tag& e = (*f)[base + static_cast<std::size_t>(i)].value;
            if (!e.is_int() || e.as_int() < 0) return std::nullopt;
            ps.push_back(e.as_int());
        }
        return PrinSet::of(std::move(ps));
    };
    return cl;
}

CodeSeq gen_syscall_joinp(const LatticeCode& lc) {
    // [q, v] -> [tv, v, q, tq]
    CodeSeq unpack = {I(Op::Unpack), I(Op::Swap, 2), I(Op::Unpack)};
    // Halts unless q is a non-negative integer: the cache pointer plus q
    // is only a valid pointer in that case.
    CodeSeq check = {I(Op::PushCachePtr), I(Op::Dup, 3), I(Op::Add), I(Op::Pop)};
    // [s, tv, v, q, tq] with s = [1, q]
    CodeSeq single = {I(Op::Push, 0), I(Op::Push, 2), I(Op::Alloc),
                      I(Op::Push, 1), I(Op::Dup, 1), I(Op::Store),
                      I(Op::Dup, 3), I(Op::Dup, 1), I(Op::Push, 1), I(Op::Add), I(Op::Store)};
    CodeSeq joins = CodeSeq{I(Op::Dup, 4), I(Op::Swap, 1)} + lc.join +
                    CodeSeq{I(Op::Dup, 1)} + lc.join;
    // [j, tv, v, q, tq] -> [v@j, tv, v, q, tq]
    CodeSeq pack = {I(Op::Dup, 2), I(Op::Swap, 1), I(Op::Pack)};
    CodeSeq ret = repeat({I(Op::Swap, 1), I(Op::Pop)}, 4) + CodeSeq{I(Op::Swap, 1), I(Op::Ret)};
    return unpack + check + single + joins + pack + ret;
}

KernelImage build_kernel(const RuleTable& t, const LatticeCode& lc, bool with_joinp) {
    KernelImage k;
    k.code = gen_fault_handler(t, lc);
    if (with_joinp) {
        std::int64_t entry = len(k.code);
        k.code = k.code + gen_syscall_joinp(lc);
        k.syscalls[0] = SyscallEntry{2, entry};
    }
    return k;
}

}  // namespace ifc
