#include "ifc/machine_concrete.hpp"

namespace ifc {

namespace {

using V = Tag;

const CAtom* peek(const CStack& st, std::size_t depth) {
    if (depth >= st.size()) return nullptr;
    for (std::size_t i = 0; i <= depth; ++i)
        if (!std::holds_alternative<CAtom>(st[st.size() - 1 - i])) return nullptr;
    return &std::get<CAtom>(st[st.size() - 1 - depth]);
}

// Kernel code may look through return frames.
const CAtom* peek_raw(const CStack& st, std::size_t depth) {
    if (depth >= st.size()) return nullptr;
    return std::get_if<CAtom>(&st[st.size() - 1 - depth]);
}

std::optional<HaltReason> add(const V& a, const V& b, V& out) {
    std::int64_t r = 0;
    if (a.is_int() && b.is_int()) {
        if (__builtin_add_overflow(a.as_int(), b.as_int(), &r)) return HaltReason::Overflow;
        out = V::integer(r);
        return std::nullopt;
    }
    if (a.is_ptr() && b.is_ptr()) return HaltReason::BadOperand;
    const Pointer<Priv>& p = a.is_ptr() ? a.as_ptr() : b.as_ptr();
    std::int64_t n = a.is_ptr() ? b.as_int() : a.as_int();
    if (__builtin_add_overflow(p.offset, n, &r)) return HaltReason::Overflow;
    if (r < 0) return HaltReason::BadOperand;
    out = V::pointer(p.frame, r);
    return std::nullopt;
}

std::optional<HaltReason> sub(const V& a, const V& b, V& out) {
    if (!a.is_int() || !b.is_int()) return HaltReason::BadOperand;
    std::int64_t r = 0;
    if (__builtin_sub_overflow(a.as_int(), b.as_int(), &r)) return HaltReason::Overflow;
    out = V::integer(r);
    return std::nullopt;
}

bool kernel_ptr(const V& v) { return v.is_ptr() && v.as_ptr().frame.region == Priv::Kernel; }

Pointer<Priv> cache_cell(std::int64_t i) { return {kCacheFrame, i}; }

struct Hit {
    Tag rpc;
    Tag r;
};

class UserStep {
public:
    explicit UserStep(CState s) : s_(std::move(s)) {}

    CStep run();

private:
    CStep halt(HaltReason r) { return {std::move(s_), std::nullopt, Status::halted(r)}; }
    CStep done(std::optional<CEvent> ev = std::nullopt) {
        return {std::move(s_), std::move(ev), std::nullopt};
    }

    // Looks the instruction up in the cache; on a miss the state is turned
    // into the fault-handler entry state.
    std::optional<Hit> consult(Opcode op, const Tag& t1, const Tag& t2, const Tag& t3) {
        std::array<Tag, 5> line{Tag::integer(code(op)), s_.pc.mark, t1, t2, t3};
        if (cache_input(s_.mem) == line) {
            auto out = cache_output(s_.mem);
            return Hit{out[0], out[1]};
        }
        for (std::size_t i = 0; i < line.size(); ++i)
            s_.mem.store(cache_cell(static_cast<std::int64_t>(i)), katom(line[i]));
        s_.mem.store(cache_cell(CacheAddr::tag_rpc), katom(default_tag()));
        s_.mem.store(cache_cell(CacheAddr::tag_r), katom(default_tag()));
        s_.stack.emplace_back(CRetFrame{s_.pc, Priv::User});
        s_.priv = Priv::Kernel;
        s_.pc = katom(0);
        return std::nullopt;
    }

    void pop(std::size_t n) { s_.stack.resize(s_.stack.size() - n); }
    void next_pc(const Tag& t) { s_.pc = CAtom{V::integer(idx_ + 1), t}; }

    CState s_;
    std::int64_t idx_ = 0;
};

CStep UserStep::run() {
    if (!s_.pc.value.is_int()) return halt(HaltReason::BadPc);
    idx_ = s_.pc.value.as_int();
    if (idx_ < 0) return halt(HaltReason::BadPc);
    if (static_cast<std::uint64_t>(idx_) >= s_.uimem->size())
        return {std::move(s_), std::nullopt, Status::clean_stop()};
    const Instr ins = (*s_.uimem)[static_cast<std::size_t>(idx_)];
    auto& st = s_.stack;
    const Tag td = default_tag();

    switch (ins.op) {
        case Op::Add:
        case Op::Sub:
        case Op::Eq: {
            const CAtom* a1 = peek(st, 0);
            const CAtom* a2 = peek(st, 1);
            if (!a1 || !a2) return halt(HaltReason::StackUnderflow);
            V result;
            if (ins.op == Op::Add) {
                if (auto e = add(a1->value, a2->value, result)) return halt(*e);
            } else if (ins.op == Op::Sub) {
                if (auto e = sub(a1->value, a2->value, result)) return halt(*e);
            } else {
                result = V::integer(a1->value == a2->value ? 1 : 0);
            }
            auto hit = consult(*opcode_of(ins.op), a1->mark, a2->mark, td);
            if (!hit) return done();
            pop(2);
            st.emplace_back(CAtom{result, hit->r});
            next_pc(hit->rpc);
            return done();
        }
        case Op::Push: {
            auto hit = consult(Opcode::Push, td, td, td);
            if (!hit) return done();
            st.emplace_back(CAtom{V::integer(ins.imm), hit->r});
            next_pc(hit->rpc);
            return done();
        }
        case Op::Pop: {
            if (!peek(st, 0)) return halt(HaltReason::StackUnderflow);
            auto hit = consult(Opcode::Pop, td, td, td);
            if (!hit) return done();
            pop(1);
            next_pc(hit->rpc);
            return done();
        }
        case Op::Load: {
            const CAtom* p = peek(st, 0);
            if (!p) return halt(HaltReason::StackUnderflow);
            if (!p->value.is_ptr()) return halt(HaltReason::BadOperand);
            if (kernel_ptr(p->value)) return halt(HaltReason::KernelPointer);
            CAtom cell;
            if (auto e = s_.mem.load(p->value.as_ptr(), cell); e != MemError::None)
                return halt(halt_reason(e));
            auto hit = consult(Opcode::Load, p->mark, cell.mark, td);
            if (!hit) return done();
            pop(1);
            st.emplace_back(CAtom{cell.value, hit->r});
            next_pc(hit->rpc);
            return done();
        }
        case Op::Store: {
            const CAtom* p = peek(st, 0);
            const CAtom* v = peek(st, 1);
            if (!p || !v) return halt(HaltReason::StackUnderflow);
            if (!p->value.is_ptr()) return halt(HaltReason::BadOperand);
            if (kernel_ptr(p->value)) return halt(HaltReason::KernelPointer);
            CAtom old;
            if (auto e = s_.mem.load(p->value.as_ptr(), old); e != MemError::None)
                return halt(halt_reason(e));
            auto hit = consult(Opcode::Store, p->mark, v->mark, old.mark);
            if (!hit) return done();
            s_.mem.store(p->value.as_ptr(), CAtom{v->value, hit->r});
            pop(2);
            next_pc(hit->rpc);
            return done();
        }
        case Op::Jump:
        case Op::Bnz:
        case Op::Call: {
            const CAtom* a = peek(st, 0);
            if (!a) return halt(HaltReason::StackUnderflow);
            if (!a->value.is_int()) return halt(HaltReason::BadOperand);
            std::int64_t target = a->value.as_int();
            if (ins.op == Op::Bnz) {
                std::int64_t delta = target != 0 ? ins.imm : 1;
                if (__builtin_add_overflow(idx_, delta, &target)) return halt(HaltReason::Overflow);
            }
            auto hit = consult(*opcode_of(ins.op), a->mark, td, td);
            if (!hit) return done();
            pop(1);
            if (ins.op == Op::Call)
                st.emplace_back(CRetFrame{CAtom{V::integer(idx_ + 1), hit->r}, Priv::User});
            s_.pc = CAtom{V::integer(target), hit->rpc};
            return done();
        }
        case Op::Ret: {
            std::size_t i = st.size();
            while (i > 0 && std::holds_alternative<CAtom>(st[i - 1])) --i;
            if (i == 0) return halt(HaltReason::NoReturnFrame);
            const CRetFrame frame = std::get<CRetFrame>(st[i - 1]);
            auto hit = consult(Opcode::Ret, frame.pc.mark, td, td);
            if (!hit) return done();
            st.resize(i - 1);
            s_.pc = CAtom{frame.pc.value, hit->rpc};
            s_.priv = frame.priv;
            return done();
        }
        case Op::Output: {
            const CAtom* a = peek(st, 0);
            if (!a) return halt(HaltReason::StackUnderflow);
            if (!a->value.is_int()) return halt(HaltReason::OutputPointer);
            auto hit = consult(Opcode::Output, a->mark, td, td);
            if (!hit) return done();
            CEvent ev{CAtom{a->value, hit->r}, s_.mem.restricted(Priv::Kernel)};
            pop(1);
            next_pc(hit->rpc);
            return done(std::move(ev));
        }
        case Op::Dup: {
            if (ins.imm < 0) return halt(HaltReason::BadOperand);
            const CAtom* a = peek(st, static_cast<std::size_t>(ins.imm));
            if (!a) return halt(HaltReason::StackUnderflow);
            auto hit = consult(Opcode::Dup, a->mark, td, td);
            if (!hit) return done();
            V v = a->value;
            st.emplace_back(CAtom{std::move(v), hit->r});
            next_pc(hit->rpc);
            return done();
        }
        case Op::Swap: {
            if (ins.imm < 0) return halt(HaltReason::BadOperand);
            auto depth = static_cast<std::size_t>(ins.imm);
            if (!peek(st, depth)) return halt(HaltReason::StackUnderflow);
            auto hit = consult(Opcode::Swap, td, td, td);
            if (!hit) return done();
            std::swap(st[st.size() - 1], st[st.size() - 1 - depth]);
            next_pc(hit->rpc);
            return done();
        }
        case Op::Alloc: {
            const CAtom* k = peek(st, 0);
            const CAtom* a = peek(st, 1);
            if (!k || !a) return halt(HaltReason::StackUnderflow);
            if (!k->value.is_int() || k->value.as_int() < 0) return halt(HaltReason::BadOperand);
            if (k->value.as_int() > kMaxFrameSize) return halt(HaltReason::AllocTooLarge);
            auto hit = consult(Opcode::Alloc, k->mark, a->mark, td);
            if (!hit) return done();
            auto size = static_cast<std::size_t>(k->value.as_int());
            const CAtom def = *a;
            pop(2);
            auto id = s_.mem.alloc(Priv::User, size, def);
            st.emplace_back(CAtom{V::pointer(id, 0), hit->r});
            next_pc(hit->rpc);
            return done();
        }
        case Op::SizeOf:
        case Op::GetOff: {
            const CAtom* p = peek(st, 0);
            if (!p) return halt(HaltReason::StackUnderflow);
            if (!p->value.is_ptr()) return halt(HaltReason::BadOperand);
            if (kernel_ptr(p->value)) return halt(HaltReason::KernelPointer);
            std::int64_t n = p->value.as_ptr().offset;
            if (ins.op == Op::SizeOf) {
                const auto* f = s_.mem.frame(p->value.as_ptr().frame);
                if (!f) return halt(HaltReason::UnknownFrame);
                n = static_cast<std::int64_t>(f->size());
            }
            auto hit = consult(*opcode_of(ins.op), p->mark, td, td);
            if (!hit) return done();
            pop(1);
            st.emplace_back(CAtom{V::integer(n), hit->r});
            next_pc(hit->rpc);
            return done();
        }
        case Op::SysCall: {
            if (!s_.syscalls) return halt(HaltReason::UnknownSyscall);
            auto it = s_.syscalls->find(ins.imm);
            if (it == s_.syscalls->end()) return halt(HaltReason::UnknownSyscall);
            const SyscallEntry e = it->second;
            for (std::size_t i = 0; i < e.arity; ++i)
                if (!peek(st, i)) return halt(HaltReason::StackUnderflow);
            CRetFrame frame{CAtom{V::integer(idx_ + 1), s_.pc.mark}, Priv::User};
            st.insert(st.end() - static_cast<std::ptrdiff_t>(e.arity), frame);
            s_.priv = Priv::Kernel;
            s_.pc = katom(e.entry);
            return done();
        }
        case Op::PushCachePtr:
        case Op::Unpack:
        case Op::Pack: return halt(HaltReason::PrivilegeViolation);
    }
    return halt(HaltReason::BadPc);
}

CStep kernel_step(CState s) {
    auto halt = [&](HaltReason r) { return CStep{std::move(s), std::nullopt, Status::halted(r)}; };
    if (!s.pc.value.is_int()) return halt(HaltReason::BadPc);
    const std::int64_t idx = s.pc.value.as_int();
    if (idx == -1) return halt(HaltReason::KernelFault);
    if (idx < 0 || static_cast<std::uint64_t>(idx) >= s.kimem->size())
        return halt(HaltReason::BadPc);
    const Instr ins = (*s.kimem)[static_cast<std::size_t>(idx)];
    auto& st = s.stack;
    auto pop = [&](std::size_t n) { st.resize(st.size() - n); };
    auto next = [&]() {
        s.pc = katom(idx + 1);
        return CStep{std::move(s), std::nullopt, std::nullopt};
    };

    switch (ins.op) {
        case Op::Add:
        case Op::Sub:
        case Op::Eq: {
            const CAtom* a1 = peek(st, 0);
            const CAtom* a2 = peek(st, 1);
            if (!a1 || !a2) return halt(HaltReason::StackUnderflow);
            V result;
            if (ins.op == Op::Add) {
                if (auto e = add(a1->value, a2->value, result)) return halt(*e);
            } else if (ins.op == Op::Sub) {
                if (auto e = sub(a1->value, a2->value, result)) return halt(*e);
            } else {
                result = V::integer(a1->value == a2->value ? 1 : 0);
            }
            pop(2);
            st.emplace_back(katom(result));
            return next();
        }
        case Op::Push:
            st.emplace_back(katom(ins.imm));
            return next();
        case Op::Pop:
            if (!peek(st, 0)) return halt(HaltReason::StackUnderflow);
            pop(1);
            return next();
        case Op::Load: {
            const CAtom* p = peek(st, 0);
            if (!p) return halt(HaltReason::StackUnderflow);
            if (!p->value.is_ptr()) return halt(HaltReason::BadOperand);
            CAtom cell;
            if (auto e = s.mem.load(p->value.as_ptr(), cell); e != MemError::None)
                return halt(halt_reason(e));
            pop(1);
            st.emplace_back(std::move(cell));
            return next();
        }
        case Op::Store: {
            const CAtom* p = peek(st, 0);
            const CAtom* v = peek(st, 1);
            if (!p || !v) return halt(HaltReason::StackUnderflow);
            if (!p->value.is_ptr()) return halt(HaltReason::BadOperand);
            if (auto e = s.mem.store(p->value.as_ptr(), *v); e != MemError::None)
                return halt(halt_reason(e));
            pop(2);
            return next();
        }
        case Op::Jump:
        case Op::Bnz:
        case Op::Call: {
            const CAtom* a = peek(st, 0);
            if (!a) return halt(HaltReason::StackUnderflow);
            if (!a->value.is_int()) return halt(HaltReason::BadOperand);
            std::int64_t target = a->value.as_int();
            if (ins.op == Op::Bnz) {
                std::int64_t delta = target != 0 ? ins.imm : 1;
                if (__builtin_add_overflow(idx, delta, &target)) return halt(HaltReason::Overflow);
            }
            pop(1);
            if (ins.op == Op::Call) st.emplace_back(CRetFrame{katom(idx + 1), Priv::Kernel});
            s.pc = katom(target);
            return CStep{std::move(s), std::nullopt, std::nullopt};
        }
        case Op::Ret: {
            std::size_t i = st.size();
            while (i > 0 && std::holds_alternative<CAtom>(st[i - 1])) --i;
            if (i == 0) return halt(HaltReason::NoReturnFrame);
            const CRetFrame frame = std::get<CRetFrame>(st[i - 1]);
            st.resize(i - 1);
            s.pc = frame.pc;
            s.priv = frame.priv;
            return CStep{std::move(s), std::nullopt, std::nullopt};
        }
        case Op::Output: return halt(HaltReason::KernelOutput);
        case Op::Dup: {
            if (ins.imm < 0) return halt(HaltReason::BadOperand);
            const CAtom* a = peek_raw(st, static_cast<std::size_t>(ins.imm));
            if (!a) return halt(HaltReason::StackUnderflow);
            CAtom copy = *a;
            st.emplace_back(std::move(copy));
            return next();
        }
        case Op::Swap: {
            if (ins.imm < 0) return halt(HaltReason::BadOperand);
            auto depth = static_cast<std::size_t>(ins.imm);
            if (depth >= st.size()) return halt(HaltReason::StackUnderflow);
            std::swap(st[st.size() - 1], st[st.size() - 1 - depth]);
            return next();
        }
        case Op::Alloc: {
            const CAtom* k = peek(st, 0);
            const CAtom* a = peek(st, 1);
            if (!k || !a) return halt(HaltReason::StackUnderflow);
            if (!k->value.is_int() || k->value.as_int() < 0) return halt(HaltReason::BadOperand);
            if (k->value.as_int() > kMaxFrameSize) return halt(HaltReason::AllocTooLarge);
            auto size = static_cast<std::size_t>(k->value.as_int());
            const CAtom def = *a;
            pop(2);
            auto id = s.mem.alloc(Priv::Kernel, size, def);
            st.emplace_back(katom(V::pointer(id, 0)));
            return next();
        }
        case Op::SizeOf:
        case Op::GetOff: {
            const CAtom* p = peek(st, 0);
            if (!p) return halt(HaltReason::StackUnderflow);
            if (!p->value.is_ptr()) return halt(HaltReason::BadOperand);
            std::int64_t n = p->value.as_ptr().offset;
            if (ins.op == Op::SizeOf) {
                const auto* f = s.mem.frame(p->value.as_ptr().frame);
                if (!f) return halt(HaltReason::UnknownFrame);
                n = static_cast<std::int64_t>(f->size());
            }
            pop(1);
            st.emplace_back(katom(n));
            return next();
        }
        case Op::SysCall: return halt(HaltReason::PrivilegeViolation);
        case Op::PushCachePtr:
            st.emplace_back(katom(V::pointer(kCacheFrame, 0)));
            return next();
        case Op::Unpack: {
            const CAtom* a = peek(st, 0);
            if (!a) return halt(HaltReason::StackUnderflow);
            const CAtom atom = *a;
            pop(1);
            st.emplace_back(katom(atom.value));
            st.emplace_back(katom(atom.mark));
            return next();
        }
        case Op::Pack: {
            const CAtom* t = peek(st, 0);
            const CAtom* v = peek(st, 1);
            if (!t || !v) return halt(HaltReason::StackUnderflow);
            CAtom packed{v->value, t->value};
            pop(2);
            st.emplace_back(std::move(packed));
            return next();
        }
    }
    return halt(HaltReason::BadPc);
}

bool fetches(const CState& s, Op op) {
    if (!s.pc.value.is_int()) return false;
    const auto& code = s.priv == Priv::User ? *s.uimem : *s.kimem;
    std::int64_t i = s.pc.value.as_int();
    return i >= 0 && static_cast<std::uint64_t>(i) < code.size() &&
           code[static_cast<std::size_t>(i)].op == op;
}

}  // namespace

CMemory new_kernel_memory() {
    CMemory m;
    m.alloc(Priv::Kernel, CacheAddr::size, katom(-1));
    return m;
}

CState init_concrete(const CInput& in, const KernelImage& kernel) {
    CState s;
    s.priv = Priv::User;
    s.uimem = std::make_shared<const Program>(in.program);
    s.kimem = std::make_shared<const Program>(kernel.code);
    s.mem = in.memory;
    s.mem.alloc(Priv::User, in.mem_size, CAtom{V::integer(0), in.tag});
    for (auto it = in.args.rbegin(); it != in.args.rend(); ++it) s.stack.emplace_back(*it);
    s.pc = CAtom{V::integer(0), in.tag};
    s.syscalls = std::make_shared<const SyscallEntries>(kernel.syscalls);
    return s;
}

std::array<Tag, 5> cache_input(const CMemory& mem) {
    const auto* f = mem.frame(kCacheFrame);
    return {(*f)[0].value, (*f)[1].value, (*f)[2].value, (*f)[3].value, (*f)[4].value};
}

std::array<Tag, 2> cache_output(const CMemory& mem) {
    const auto* f = mem.frame(kCacheFrame);
    return {(*f)[5].value, (*f)[6].value};
}

CStep step_concrete(CState s) {
    if (s.priv == Priv::Kernel) return kernel_step(std::move(s));
    return UserStep(std::move(s)).run();
}

CRunResult run_concrete(CState s, std::size_t fuel, std::size_t kernel_budget) {
    CRunResult out;
    out.status = Status::exhausted();
    std::size_t segment = 0;
    while (true) {
        const bool user = s.priv == Priv::User;
        if (user && out.stats.user_steps >= fuel) break;
        if (!user && segment >= kernel_budget) {
            out.status = Status::halted(HaltReason::KernelBudget);
            break;
        }
        const bool syscall = user && fetches(s, Op::SysCall);
        CStep r = step_concrete(std::move(s));
        s = std::move(r.state);
        if (r.stop) {
            out.status = *r.stop;
            break;
        }
        if (r.event) out.trace.push_back(std::move(*r.event));
        if (user) {
            const bool entered_kernel = s.priv == Priv::Kernel;
            if (entered_kernel) segment = 0;
            if (entered_kernel && !syscall)
                ++out.stats.misses;
            else
                ++out.stats.user_steps;
        } else {
            ++segment;
            ++out.stats.kernel_steps;
            if (segment > out.stats.longest_kernel_segment)
                out.stats.longest_kernel_segment = segment;
        }
    }
    out.final = std::move(s);
    return out;
}

KernelRun run_kernel(CState s, std::size_t budget) {
    KernelRun out;
    while (s.priv == Priv::Kernel) {
        if (out.steps >= budget) {
            out.stop = Status::halted(HaltReason::KernelBudget);
            break;
        }
        CStep r = step_concrete(std::move(s));
        s = std::move(r.state);
        if (r.stop) {
            out.stop = *r.stop;
            break;
        }
        ++out.steps;
    }
    out.state = std::move(s);
    return out;
}

std::string render_tag(const Tag& t) { return value_to_string(t); }

}  // namespace ifc
