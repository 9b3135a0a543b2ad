#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "ifc/isa.hpp"
#include "ifc/lattice.hpp"
#include "ifc/rule_dsl.hpp"

namespace ifc {

template <Lattice L>
using AAtom = Atom<L, L>;
template <Lattice L>
using AStack = Stack<L, L>;
template <Lattice L>
using AMemory = Memory<L, L>;
template <Lattice L>
using Event = AAtom<L>;
template <Lattice L>
using Trace = std::vector<Event<L>>;

template <Lattice L>
struct Syscall {
    std::size_t arity = 0;
    // Arguments are passed top-first; nullopt halts the machine.
    std::function<std::optional<AAtom<L>>(const std::vector<AAtom<L>>&)> fn;
};

template <Lattice L>
using SyscallTable = std::map<std::int64_t, Syscall<L>>;

template <Lattice L>
struct AState {
    std::shared_ptr<const Program> imem;
    AMemory<L> mem;
    AStack<L> stack;
    AAtom<L> pc;
    std::shared_ptr<const SyscallTable<L>> syscalls;
};

template <Lattice L>
struct MachineInput {
    Program program;
    std::vector<AAtom<L>> args;  // top of stack first
    std::size_t mem_size = 0;
    L label{};
};

template <Lattice L>
struct RunResult {
    Trace<L> trace;
    Status status;
    AState<L> final;
    std::size_t steps = 0;
};

template <Lattice L>
using AStep = StepResult<AState<L>, Event<L>>;

template <Lattice L>
AAtom<L> int_atom(std::int64_t n, L l) {
    return {Value<L>::integer(n), std::move(l)};
}

template <Lattice L>
AState<L> init_abstract(const MachineInput<L>& in,
                        std::shared_ptr<const SyscallTable<L>> syscalls = nullptr) {
    AState<L> s;
    s.imem = std::make_shared<const Program>(in.program);
    s.mem.alloc(in.label, in.mem_size, int_atom<L>(0, in.label));
    for (auto it = in.args.rbegin(); it != in.args.rend(); ++it) s.stack.emplace_back(*it);
    s.pc = int_atom<L>(0, in.label);
    s.syscalls = std::move(syscalls);
    return s;
}

// Outcome of an IFC decision for one instruction.
template <Lattice L>
struct Decision {
    std::optional<HaltReason> halt;
    L rpc{};
    L r{};
};

// Label propagation written out per instruction.
template <Lattice L>
struct HardwiredRules {
    Decision<L> operator()(Opcode op, const RVec<L>& rv) const {
        const L& pc = rv.pc;
        auto a = [&](int i) -> const L& { return *rv.args[i - 1]; };
        switch (op) {
            case Opcode::Add:
            case Opcode::Sub:
            case Opcode::Load:
            case Opcode::Eq: return {std::nullopt, pc, join(a(1), a(2))};
            case Opcode::Output: return {std::nullopt, pc, join(a(1), pc)};
            case Opcode::Push:
            case Opcode::Pop:
            case Opcode::Swap: return {std::nullopt, pc, L::bot()};
            case Opcode::Store:
                if (!flows(join(a(1), pc), a(3))) return {HaltReason::IfcViolation, {}, {}};
                return {std::nullopt, pc, join(join(a(1), a(2)), pc)};
            case Opcode::Jump:
            case Opcode::Bnz: return {std::nullopt, join(a(1), pc), L::bot()};
            case Opcode::Call: return {std::nullopt, join(a(1), pc), pc};
            case Opcode::Ret: return {std::nullopt, a(1), L::bot()};
            case Opcode::Dup:
            case Opcode::Alloc:
            case Opcode::SizeOf:
            case Opcode::GetOff: return {std::nullopt, pc, a(1)};
            case Opcode::SysCall: break;
        }
        return {HaltReason::IfcViolation, {}, {}};
    }
};

namespace detail {

template <Lattice L>
const AAtom<L>* peek(const AStack<L>& st, std::size_t depth) {
    if (depth >= st.size()) return nullptr;
    for (std::size_t i = 0; i <= depth; ++i)
        if (!std::holds_alternative<AAtom<L>>(st[st.size() - 1 - i])) return nullptr;
    return &std::get<AAtom<L>>(st[st.size() - 1 - depth]);
}

inline bool add_ok(std::int64_t a, std::int64_t b, std::int64_t& out) {
    return !__builtin_add_overflow(a, b, &out);
}

inline bool sub_ok(std::int64_t a, std::int64_t b, std::int64_t& out) {
    return !__builtin_sub_overflow(a, b, &out);
}

// Int+Int, Ptr+Int or Int+Ptr.
template <class Region>
std::optional<HaltReason> add_values(const Value<Region>& a, const Value<Region>& b,
                                     Value<Region>& out) {
    std::int64_t r = 0;
    if (a.is_int() && b.is_int()) {
        if (!add_ok(a.as_int(), b.as_int(), r)) return HaltReason::Overflow;
        out = Value<Region>::integer(r);
        return std::nullopt;
    }
    if (a.is_ptr() && b.is_ptr()) return HaltReason::BadOperand;
    const auto& p = a.is_ptr() ? a.as_ptr() : b.as_ptr();
    std::int64_t n = a.is_ptr() ? b.as_int() : a.as_int();
    if (!add_ok(p.offset, n, r)) return HaltReason::Overflow;
    if (r < 0) return HaltReason::BadOperand;
    out = Value<Region>::pointer(p.frame, r);
    return std::nullopt;
}

}  // namespace detail

// One step of the abstract machine family; the label logic comes from rules.
template <Lattice L, class Rules>
AStep<L> step_with(const Rules& rules, AState<L> s) {
    using V = Value<L>;
    auto halt = [&](HaltReason r) { return AStep<L>{std::move(s), std::nullopt, Status::halted(r)}; };

    if (!s.pc.value.is_int()) return halt(HaltReason::BadPc);
    const std::int64_t idx = s.pc.value.as_int();
    if (idx < 0) return halt(HaltReason::BadPc);
    if (static_cast<std::uint64_t>(idx) >= s.imem->size())
        return AStep<L>{std::move(s), std::nullopt, Status::clean_stop()};
    const Instr ins = (*s.imem)[static_cast<std::size_t>(idx)];
    auto& st = s.stack;

    RVec<L> rv;
    rv.pc = s.pc.mark;
    auto decide = [&](Opcode op) {
        try {
            return rules(op, rv);
        } catch (const MissingInput&) {
            return Decision<L>{HaltReason::MissingInput, {}, {}};
        }
    };
    auto pop = [&](std::size_t n) { st.resize(st.size() - n); };
    auto next_pc = [&](const L& l) { s.pc = int_atom<L>(idx + 1, l); };
    auto done = [&](std::optional<Event<L>> ev = std::nullopt) {
        return AStep<L>{std::move(s), std::move(ev), std::nullopt};
    };

    switch (ins.op) {
        case Op::Add:
        case Op::Sub:
        case Op::Eq: {
            const AAtom<L>* a1 = detail::peek(st, 0);
            const AAtom<L>* a2 = detail::peek(st, 1);
            if (!a1 || !a2) return halt(HaltReason::StackUnderflow);
            V result;
            if (ins.op == Op::Add) {
                if (auto err = detail::add_values(a1->value, a2->value, result))
                    return halt(*err);
            } else if (ins.op == Op::Sub) {
                if (!a1->value.is_int() || !a2->value.is_int())
                    return halt(HaltReason::BadOperand);
                std::int64_t r = 0;
                if (!detail::sub_ok(a1->value.as_int(), a2->value.as_int(), r))
                    return halt(HaltReason::Overflow);
                result = V::integer(r);
            } else {
                result = V::integer(a1->value == a2->value ? 1 : 0);
            }
            rv.args = {a1->mark, a2->mark, std::nullopt};
            auto d = decide(*opcode_of(ins.op));
            if (d.halt) return halt(*d.halt);
            pop(2);
            st.emplace_back(AAtom<L>{std::move(result), d.r});
            next_pc(d.rpc);
            return done();
        }
        case Op::Push: {
            auto d = decide(Opcode::Push);
            if (d.halt) return halt(*d.halt);
            st.emplace_back(int_atom<L>(ins.imm, d.r));
            next_pc(d.rpc);
            return done();
        }
        case Op::Pop: {
            if (!detail::peek(st, 0)) return halt(HaltReason::StackUnderflow);
            auto d = decide(Opcode::Pop);
            if (d.halt) return halt(*d.halt);
            pop(1);
            next_pc(d.rpc);
            return done();
        }
        case Op::Load: {
            const AAtom<L>* p = detail::peek(st, 0);
            if (!p) return halt(HaltReason::StackUnderflow);
            if (!p->value.is_ptr()) return halt(HaltReason::BadOperand);
            AAtom<L> cell;
            if (auto e = s.mem.load(p->value.as_ptr(), cell); e != MemError::None)
                return halt(halt_reason(e));
            rv.args = {p->mark, cell.mark, std::nullopt};
            auto d = decide(Opcode::Load);
            if (d.halt) return halt(*d.halt);
            pop(1);
            st.emplace_back(AAtom<L>{cell.value, d.r});
            next_pc(d.rpc);
            return done();
        }
        case Op::Store: {
            const AAtom<L>* p = detail::peek(st, 0);
            const AAtom<L>* v = detail::peek(st, 1);
            if (!p || !v) return halt(HaltReason::StackUnderflow);
            if (!p->value.is_ptr()) return halt(HaltReason::BadOperand);
            AAtom<L> old;
            if (auto e = s.mem.load(p->value.as_ptr(), old); e != MemError::None)
                return halt(halt_reason(e));
            rv.args = {p->mark, v->mark, old.mark};
            auto d = decide(Opcode::Store);
            if (d.halt) return halt(*d.halt);
            const Pointer<L> where = p->value.as_ptr();
            s.mem.store(where, AAtom<L>{v->value, d.r});
            pop(2);
            next_pc(d.rpc);
            return done();
        }
        case Op::Jump:
        case Op::Bnz:
        case Op::Call: {
            const AAtom<L>* a = detail::peek(st, 0);
            if (!a) return halt(HaltReason::StackUnderflow);
            if (!a->value.is_int()) return halt(HaltReason::BadOperand);
            std::int64_t target = a->value.as_int();
            if (ins.op == Op::Bnz) {
                std::int64_t delta = target != 0 ? ins.imm : 1;
                if (!detail::add_ok(idx, delta, target)) return halt(HaltReason::Overflow);
            }
            rv.args = {a->mark, std::nullopt, std::nullopt};
            auto d = decide(*opcode_of(ins.op));
            if (d.halt) return halt(*d.halt);
            pop(1);
            if (ins.op == Op::Call)
                st.emplace_back(RetFrame<L, L>{int_atom<L>(idx + 1, d.r), Priv::User});
            s.pc = int_atom<L>(target, d.rpc);
            return done();
        }
        case Op::Ret: {
            std::size_t i = st.size();
            while (i > 0 && std::holds_alternative<AAtom<L>>(st[i - 1])) --i;
            if (i == 0) return halt(HaltReason::NoReturnFrame);
            const RetFrame<L, L> frame = std::get<RetFrame<L, L>>(st[i - 1]);
            rv.args = {frame.pc.mark, std::nullopt, std::nullopt};
            auto d = decide(Opcode::Ret);
            if (d.halt) return halt(*d.halt);
            st.resize(i - 1);
            s.pc = AAtom<L>{frame.pc.value, d.rpc};
            return done();
        }
        case Op::Output: {
            const AAtom<L>* a = detail::peek(st, 0);
            if (!a) return halt(HaltReason::StackUnderflow);
            if (!a->value.is_int()) return halt(HaltReason::OutputPointer);
            rv.args = {a->mark, std::nullopt, std::nullopt};
            auto d = decide(Opcode::Output);
            if (d.halt) return halt(*d.halt);
            Event<L> ev{a->value, d.r};
            pop(1);
            next_pc(d.rpc);
            return done(std::move(ev));
        }
        case Op::Dup: {
            if (ins.imm < 0) return halt(HaltReason::BadOperand);
            const AAtom<L>* a = detail::peek(st, static_cast<std::size_t>(ins.imm));
            if (!a) return halt(HaltReason::StackUnderflow);
            rv.args = {a->mark, std::nullopt, std::nullopt};
            auto d = decide(Opcode::Dup);
            if (d.halt) return halt(*d.halt);
            V v = a->value;
            st.emplace_back(AAtom<L>{std::move(v), d.r});
            next_pc(d.rpc);
            return done();
        }
        case Op::Swap: {
            if (ins.imm < 0) return halt(HaltReason::BadOperand);
            auto depth = static_cast<std::size_t>(ins.imm);
            if (!detail::peek(st, depth)) return halt(HaltReason::StackUnderflow);
            auto d = decide(Opcode::Swap);
            if (d.halt) return halt(*d.halt);
            std::swap(st[st.size() - 1], st[st.size() - 1 - depth]);
            next_pc(d.rpc);
            return done();
        }
        case Op::Alloc: {
            const AAtom<L>* k = detail::peek(st, 0);
            const AAtom<L>* a = detail::peek(st, 1);
            if (!k || !a) return halt(HaltReason::StackUnderflow);
            if (!k->value.is_int() || k->value.as_int() < 0) return halt(HaltReason::BadOperand);
            if (k->value.as_int() > kMaxFrameSize) return halt(HaltReason::AllocTooLarge);
            rv.args = {k->mark, a->mark, std::nullopt};
            auto d = decide(Opcode::Alloc);
            if (d.halt) return halt(*d.halt);
            auto size = static_cast<std::size_t>(k->value.as_int());
            const AAtom<L> def = *a;
            pop(2);
            // Frames allocated under a raised pc land in a region at least as
            // high as the pc, so low regions evolve identically in both runs
            // of a noninterference pair.
            auto id = s.mem.alloc(join(d.r, s.pc.mark), size, def);
            st.emplace_back(AAtom<L>{V::pointer(id, 0), d.r});
            next_pc(d.rpc);
            return done();
        }
        case Op::SizeOf:
        case Op::GetOff: {
            const AAtom<L>* p = detail::peek(st, 0);
            if (!p) return halt(HaltReason::StackUnderflow);
            if (!p->value.is_ptr()) return halt(HaltReason::BadOperand);
            std::int64_t n = p->value.as_ptr().offset;
            if (ins.op == Op::SizeOf) {
                const auto* f = s.mem.frame(p->value.as_ptr().frame);
                if (!f) return halt(HaltReason::UnknownFrame);
                n = static_cast<std::int64_t>(f->size());
            }
            rv.args = {p->mark, std::nullopt, std::nullopt};
            auto d = decide(*opcode_of(ins.op));
            if (d.halt) return halt(*d.halt);
            pop(1);
            st.emplace_back(int_atom<L>(n, d.r));
            next_pc(d.rpc);
            return done();
        }
        case Op::SysCall: {
            if (!s.syscalls) return halt(HaltReason::UnknownSyscall);
            auto it = s.syscalls->find(ins.imm);
            if (it == s.syscalls->end()) return halt(HaltReason::UnknownSyscall);
            const Syscall<L>& sc = it->second;
            std::vector<AAtom<L>> args;
            for (std::size_t i = 0; i < sc.arity; ++i) {
                const AAtom<L>* a = detail::peek(st, i);
                if (!a) return halt(HaltReason::StackUnderflow);
                args.push_back(*a);
            }
            auto res = sc.fn(args);
            if (!res) return halt(HaltReason::SyscallFailed);
            pop(sc.arity);
            st.emplace_back(std::move(*res));
            next_pc(s.pc.mark);
            return done();
        }
        case Op::PushCachePtr:
        case Op::Unpack:
        case Op::Pack: return halt(HaltReason::PrivilegeViolation);
    }
    return halt(HaltReason::BadPc);
}

template <Lattice L, class Rules>
RunResult<L> run_with(const Rules& rules, AState<L> s, std::size_t fuel) {
    RunResult<L> out;
    out.status = Status::exhausted();
    for (; out.steps < fuel; ++out.steps) {
        AStep<L> r = step_with(rules, std::move(s));
        s = std::move(r.state);
        if (r.stop) {
            out.status = *r.stop;
            break;
        }
        if (r.event) out.trace.push_back(std::move(*r.event));
    }
    out.final = std::move(s);
    return out;
}

template <Lattice L>
AStep<L> step_abstract(AState<L> s) {
    return step_with(HardwiredRules<L>{}, std::move(s));
}

template <Lattice L>
RunResult<L> run_abstract(AState<L> s, std::size_t fuel) {
    return run_with(HardwiredRules<L>{}, std::move(s), fuel);
}

// joinP: arguments (q, v) top-first; adds principal q and q's own label to v.
std::optional<AAtom<PrinSet>> joinp(const std::vector<AAtom<PrinSet>>& args);

inline constexpr std::int64_t kJoinPId = 0;

Syscall<PrinSet> syscall_joinp();
std::shared_ptr<const SyscallTable<PrinSet>> joinp_syscalls();

template <Lattice L>
std::string render_event(const Event<L>& e) {
    return "OUT " + value_to_string(e.value) + " @ " + to_string(e.mark);
}

}  // namespace ifc
