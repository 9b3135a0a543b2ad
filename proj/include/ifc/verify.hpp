#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "ifc/codegen.hpp"
#include "ifc/isa.hpp"
#include "ifc/lattice.hpp"
#include "ifc/machine_abstract.hpp"
#include "ifc/machine_concrete.hpp"
#include "ifc/machine_symbolic.hpp"
#include "ifc/rng.hpp"
#include "ifc/rule_dsl.hpp"

namespace ifc {

// ---------------------------------------------------------------- labels

struct GenConfig {
    std::size_t max_len = 24;
    std::size_t max_args = 5;
    std::size_t max_mem = 4;
    std::size_t gen_steps = 60;  // generation-by-execution steps per run
    std::int64_t universe = 4;   // principals 0..universe-1
    bool syscalls = false;       // emit SysCall for joinP
};

template <Lattice L>
struct LabelSpace;

template <>
struct LabelSpace<TwoPoint> {
    static TwoPoint random(Rng& rng, std::int64_t) {
        return rng.chance(1, 2) ? TwoPoint::top() : TwoPoint::bot();
    }
    static std::vector<TwoPoint> all() { return {TwoPoint::bot(), TwoPoint::top()}; }
};

template <>
struct LabelSpace<PrinSet> {
    static PrinSet random(Rng& rng, std::int64_t universe) {
        std::vector<Principal> ps;
        for (Principal p = 0; p < universe; ++p)
            if (rng.chance(1, 3)) ps.push_back(p);
        return PrinSet::of(std::move(ps));
    }
};

// ----------------------------------------------------------- observation

template <Lattice L>
bool observable(const L& o, const AAtom<L>& a) {
    return flows(a.mark, o);
}

template <Lattice L>
Trace<L> filter_trace(const L& o, const Trace<L>& t) {
    Trace<L> out;
    for (const auto& e : t)
        if (observable(o, e)) out.push_back(e);
    return out;
}

template <class E>
bool traces_indist(const std::vector<E>& a, const std::vector<E>& b) {
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i)
        if (!(a[i] == b[i])) return false;
    return true;
}

// Index of the first differing position within the common prefix.
template <class E>
std::optional<std::size_t> first_divergence(const std::vector<E>& a, const std::vector<E>& b) {
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i)
        if (!(a[i] == b[i])) return i;
    return std::nullopt;
}

template <Lattice L>
bool atom_indist(const L& o, const AAtom<L>& a, const AAtom<L>& b) {
    return a == b || (!observable(o, a) && !observable(o, b));
}

template <Lattice L>
bool elt_indist(const L& o, const StackElt<L, L>& a, const StackElt<L, L>& b) {
    const auto* x = std::get_if<AAtom<L>>(&a);
    const auto* y = std::get_if<AAtom<L>>(&b);
    if (x && y) return atom_indist(o, *x, *y);
    if (x || y) return false;
    const auto& fa = std::get<RetFrame<L, L>>(a);
    const auto& fb = std::get<RetFrame<L, L>>(b);
    return fa.priv == fb.priv && atom_indist(o, fa.pc, fb.pc);
}

template <Lattice L>
bool stack_indist(const L& o, const AStack<L>& a, const AStack<L>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!elt_indist(o, a[i], b[i])) return false;
    return true;
}

// The part of the stack from the bottom up to and including the most recent
// return frame whose saved pc is observable.
template <Lattice L>
AStack<L> crop_stack(const L& o, const AStack<L>& s) {
    std::size_t i = s.size();
    while (i > 0) {
        const auto* f = std::get_if<RetFrame<L, L>>(&s[i - 1]);
        if (f && observable(o, f->pc)) break;
        --i;
    }
    return AStack<L>(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(i));
}

// Regions the observer can see must agree frame by frame; other regions are
// ignored, since their allocation history may depend on secrets.
template <Lattice L>
bool mem_indist(const L& o, const AMemory<L>& a, const AMemory<L>& b) {
    auto check = [&](const AMemory<L>& x, const AMemory<L>& y) {
        for (const auto& [region, frames] : x.regions()) {
            if (!flows(region, o)) continue;
            if (frames.size() != y.frame_count(region)) return false;
            for (std::size_t i = 0; i < frames.size(); ++i) {
                const auto* other = y.frame(FrameId<L>{region, i});
                const auto& mine = *frames[i];
                if (mine.size() != other->size()) return false;
                for (std::size_t k = 0; k < mine.size(); ++k)
                    if (!atom_indist(o, mine[k], (*other)[k])) return false;
            }
        }
        return true;
    };
    return check(a, b) && check(b, a);
}

template <Lattice L>
bool state_observable(const L& o, const AState<L>& s) {
    return flows(s.pc.mark, o);
}

template <Lattice L>
bool state_indist(const L& o, const AState<L>& a, const AState<L>& b) {
    const bool oa = state_observable(o, a), ob = state_observable(o, b);
    if (oa != ob) return false;
    if (!mem_indist(o, a.mem, b.mem)) return false;
    if (oa) return a.pc == b.pc && stack_indist(o, a.stack, b.stack);
    return stack_indist(o, crop_stack(o, a.stack), crop_stack(o, b.stack));
}

template <Lattice L>
bool input_indist(const L& o, const MachineInput<L>& a, const MachineInput<L>& b) {
    if (!(a.program == b.program) || a.mem_size != b.mem_size || !(a.label == b.label) ||
        a.args.size() != b.args.size())
        return false;
    for (std::size_t i = 0; i < a.args.size(); ++i)
        if (!atom_indist(o, a.args[i], b.args[i])) return false;
    return true;
}

// ------------------------------------------------------------ generation

template <Lattice L>
struct InputPair {
    MachineInput<L> first;
    MachineInput<L> second;
};

namespace detail {

template <Lattice L>
std::int64_t random_int(Rng& rng, const GenConfig& cfg) {
    if (rng.chance(1, 2)) return rng.range(-1, 3);
    return rng.range(0, static_cast<std::int64_t>(cfg.max_len) - 1);
}

template <Lattice L>
AAtom<L> random_ptr(Rng& rng, const MachineInput<L>& in, const L& label) {
    auto off = static_cast<std::int64_t>(rng.below(in.mem_size));
    return {Value<L>::pointer(FrameId<L>{in.label, 0}, off), join(label, in.label)};
}

template <Lattice L>
AAtom<L> random_arg(Rng& rng, const GenConfig& cfg, const MachineInput<L>& in, const L& label) {
    if (in.mem_size > 0 && rng.chance(1, 2)) return random_ptr(rng, in, label);
    return int_atom<L>(random_int<L>(rng, cfg), label);
}

// A secret variant of arg; mostly of the same kind, so that both runs of a
// pair get past the same instructions.
template <Lattice L>
AAtom<L> vary_arg(Rng& rng, const GenConfig& cfg, const MachineInput<L>& in, const AAtom<L>& arg,
                  const L& label) {
    if (rng.chance(1, 4)) return random_arg(rng, cfg, in, label);
    if (arg.value.is_ptr()) return random_ptr(rng, in, label);
    return int_atom<L>(random_int<L>(rng, cfg), label);
}

template <Lattice L>
L random_hidden_label(Rng& rng, const GenConfig& cfg, const L& o, const L& fallback) {
    for (int tries = 0; tries < 16; ++tries) {
        L l = LabelSpace<L>::random(rng, cfg.universe);
        if (!flows(l, o)) return l;
    }
    return fallback;
}

// Counts the data atoms above the most recent return frame.
template <Lattice L>
std::size_t data_depth(const AStack<L>& st) {
    std::size_t d = 0;
    while (d < st.size() && std::holds_alternative<AAtom<L>>(st[st.size() - 1 - d])) ++d;
    return d;
}

template <Lattice L>
bool has_frame(const AStack<L>& st) {
    return data_depth(st) < st.size();
}

template <Lattice L>
bool valid_ptr(const AState<L>& s, const AAtom<L>* a) {
    if (!a || !a->value.is_ptr()) return false;
    AAtom<L> tmp;
    return s.mem.load(a->value.as_ptr(), tmp) == MemError::None;
}

// Picks an instruction that is likely to execute without halting in state s.
template <Lattice L>
Instr choose_instr(Rng& rng, const AState<L>& s, const GenConfig& cfg) {
    const auto& st = s.stack;
    const std::size_t d = data_depth(st);
    const AAtom<L>* top = detail::peek(st, 0);
    const AAtom<L>* snd = detail::peek(st, 1);
    const auto max_len = static_cast<std::int64_t>(cfg.max_len);
    const bool top_int = top && top->value.is_int();
    const bool top_addr = top_int && top->value.as_int() >= 0 && top->value.as_int() < max_len;

    struct Cand {
        unsigned weight;
        Instr ins;
    };
    std::vector<Cand> cs;
    auto add = [&](unsigned w, Op op, std::int64_t imm = 0) { cs.push_back({w, {op, imm}}); };

    if (d < 8) add(10, Op::Push, random_int<L>(rng, cfg));
    if (d >= 1) add(2, Op::Pop);
    if (top && snd) {
        const bool ii = top->value.is_int() && snd->value.is_int();
        const bool pi = top->value.is_ptr() != snd->value.is_ptr();
        if (ii || pi) add(6, Op::Add);
        if (ii) add(3, Op::Sub);
        add(3, Op::Eq);
    }
    if (valid_ptr(s, top)) {
        add(20, Op::Load);
        if (snd) add(24, Op::Store);
        add(2, Op::SizeOf);
        add(2, Op::GetOff);
    }
    if (top_addr) {
        add(2, Op::Jump);
        add(3, Op::Call);
    }
    if (top_int) {
        static constexpr std::int64_t ks[] = {-3, -2, -1, 2, 3, 4, 5};
        add(6, Op::Bnz, ks[rng.below(std::size(ks))]);
        add(30, Op::Output);
    }
    if (has_frame(st)) add(4, Op::Ret);
    if (d >= 1) add(3, Op::Dup, static_cast<std::int64_t>(rng.below(std::min<std::size_t>(d, 4))));
    if (d >= 2)
        add(2, Op::Swap, 1 + static_cast<std::int64_t>(rng.below(std::min<std::size_t>(d, 4) - 1)));
    // Bring a pointer to the top, so that memory gets exercised.
    std::vector<std::int64_t> ptrs;
    for (std::size_t i = 1; i < std::min<std::size_t>(d, 6); ++i)
        if (valid_ptr(s, detail::peek(st, i))) ptrs.push_back(static_cast<std::int64_t>(i));
    if (!ptrs.empty()) add(5, Op::Dup, rng.pick(ptrs));
    if (top_int && snd && top->value.as_int() >= 0 && top->value.as_int() <= 4) add(3, Op::Alloc);
    if (cfg.syscalls && top_int && snd && top->value.as_int() >= 0) add(4, Op::SysCall, kJoinPId);

    unsigned total = 0;
    for (const auto& c : cs) total += c.weight;
    auto r = static_cast<unsigned>(rng.below(total));
    for (const auto& c : cs) {
        if (r < c.weight) return c.ins;
        r -= c.weight;
    }
    return cs.back().ins;
}

// Unbiased filler for positions the generating runs never reached.
template <Lattice L>
Instr random_instr(Rng& rng, const GenConfig& cfg) {
    static constexpr Op ops[] = {Op::Add, Op::Sub, Op::Push, Op::Pop, Op::Load, Op::Store,
                                 Op::Jump, Op::Bnz, Op::Call, Op::Ret, Op::Output, Op::Dup,
                                 Op::Swap, Op::Alloc, Op::SizeOf, Op::GetOff, Op::Eq};
    Op op = ops[rng.below(std::size(ops))];
    if (cfg.syscalls && rng.chance(1, 18)) op = Op::SysCall;
    switch (op) {
        case Op::Push: return {op, random_int<L>(rng, cfg)};
        case Op::Bnz: return {op, rng.range(-3, 5)};
        case Op::Dup: return {op, rng.range(0, 3)};
        case Op::Swap: return {op, rng.range(1, 3)};
        case Op::SysCall: return {op, kJoinPId};
        default: return {op, 0};
    }
}

}  // namespace detail

// Builds two inputs sharing a program and agreeing on every atom the observer
// can see. The program is grown by running both inputs under `rules`.
template <Lattice L, class Rules>
InputPair<L> gen_input_pair(std::uint64_t seed, const GenConfig& cfg, const L& o,
                            const Rules& rules,
                            std::shared_ptr<const SyscallTable<L>> syscalls = nullptr) {
    Rng rng(seed);
    MachineInput<L> a;
    a.mem_size = rng.chance(1, 5) ? 0 : 1 + rng.below(cfg.max_mem);
    a.label = rng.chance(3, 4) ? L::bot() : LabelSpace<L>::random(rng, cfg.universe);
    const std::size_t nargs = rng.below(cfg.max_args + 1);
    for (std::size_t i = 0; i < nargs; ++i)
        a.args.push_back(
            detail::random_arg(rng, cfg, a, LabelSpace<L>::random(rng, cfg.universe)));

    MachineInput<L> b = a;
    for (auto& arg : b.args) {
        if (observable(o, arg)) continue;
        L l = detail::random_hidden_label(rng, cfg, o, arg.mark);
        arg = detail::vary_arg(rng, cfg, a, arg, l);
    }

    auto prog = std::make_shared<Program>(cfg.max_len, Instr{Op::Push, 0});
    std::vector<bool> filled(cfg.max_len, false);
    for (const MachineInput<L>* in : {&a, &b}) {
        AState<L> s = init_abstract(*in, syscalls);
        s.imem = prog;
        for (std::size_t k = 0; k < cfg.gen_steps; ++k) {
            if (s.pc.value.is_int()) {
                std::int64_t pc = s.pc.value.as_int();
                if (pc >= 0 && static_cast<std::size_t>(pc) < cfg.max_len &&
                    !filled[static_cast<std::size_t>(pc)]) {
                    (*prog)[static_cast<std::size_t>(pc)] = detail::choose_instr(rng, s, cfg);
                    filled[static_cast<std::size_t>(pc)] = true;
                }
            }
            auto r = step_with(rules, std::move(s));
            s = std::move(r.state);
            if (r.stop) break;
        }
    }
    std::size_t n = cfg.max_len;
    while (n > 0 && !filled[n - 1]) --n;
    Program p(prog->begin(), prog->begin() + static_cast<std::ptrdiff_t>(n));
    for (std::size_t i = 0; i < n; ++i)
        if (!filled[i]) p[i] = detail::random_instr<L>(rng, cfg);
    a.program = p;
    b.program = std::move(p);
    return {std::move(a), std::move(b)};
}

// ----------------------------------------------------------------- layers

enum class Layer { Abstract, Symbolic, Concrete };

std::string to_string(Layer l);

template <Lattice L>
struct MachineConfig {
    Layer layer = Layer::Abstract;
    RuleTable table = rabs();
    std::shared_ptr<const ConcreteLattice<L>> cl;
    std::shared_ptr<const KernelImage> kernel;
    std::size_t kernel_budget = 0;
    bool joinp = false;

    std::shared_ptr<const SyscallTable<L>> syscalls() const {
        if constexpr (std::is_same_v<L, PrinSet>) {
            if (joinp) return joinp_syscalls();
        }
        return nullptr;
    }
};

template <Lattice L>
std::shared_ptr<const ConcreteLattice<L>> default_clattice() {
    if constexpr (std::is_same_v<L, PrinSet>)
        return std::make_shared<const ConcreteLattice<PrinSet>>(prinset_clattice());
    else
        return std::make_shared<const ConcreteLattice<TwoPoint>>(two_point_clattice());
}

template <Lattice L>
std::size_t default_kernel_budget() {
    return std::is_same_v<L, PrinSet> ? kPrinSetKernelBudget : kTwoPointKernelBudget;
}

template <Lattice L>
MachineConfig<L> abstract_config(bool joinp = false) {
    MachineConfig<L> c;
    c.layer = Layer::Abstract;
    c.joinp = joinp;
    return c;
}

template <Lattice L>
MachineConfig<L> symbolic_config(RuleTable t, bool joinp = false) {
    MachineConfig<L> c;
    c.layer = Layer::Symbolic;
    c.table = std::move(t);
    c.joinp = joinp;
    return c;
}

template <Lattice L>
MachineConfig<L> concrete_config(RuleTable t, bool joinp = false,
                                 std::optional<Program> handler = std::nullopt) {
    MachineConfig<L> c;
    c.layer = Layer::Concrete;
    c.table = std::move(t);
    c.joinp = joinp && std::is_same_v<L, PrinSet>;
    c.cl = default_clattice<L>();
    KernelImage k = build_kernel(c.table, c.cl->code, c.joinp);
    if (handler) {
        // Replace the fault handler, keeping system-call routines after it.
        const auto old_len = static_cast<std::int64_t>(gen_fault_handler(c.table, c.cl->code).size());
        const auto new_len = static_cast<std::int64_t>(handler->size());
        Program code = *handler;
        code.insert(code.end(), k.code.begin() + old_len, k.code.end());
        for (auto& [id, e] : k.syscalls) e.entry += new_len - old_len;
        k.code = std::move(code);
    }
    c.kernel = std::make_shared<const KernelImage>(std::move(k));
    c.kernel_budget = default_kernel_budget<L>();
    return c;
}

class InterpretError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <Lattice L>
Event<L> interpret_cevent(const CEvent& e, const ConcreteLattice<L>& cl) {
    auto l = cl.decode(e.atom.mark, e.kernel);
    if (!l) throw InterpretError("undecodable event tag " + render_tag(e.atom.mark));
    if (!e.atom.value.is_int()) throw InterpretError("event payload is not an integer");
    return int_atom<L>(e.atom.value.as_int(), *l);
}

template <Lattice L>
Tag lower_value(const Value<L>& v) {
    if (v.is_int()) return Tag::integer(v.as_int());
    const auto& p = v.as_ptr();
    return Tag::pointer(FrameId<Priv>{Priv::User, p.frame.seq}, p.offset);
}

// Inputs only point into the initial frame, which is user frame 0 on the
// concrete machine.
template <Lattice L>
CInput lower_input(const MachineInput<L>& in, const ConcreteLattice<L>& cl) {
    CInput c;
    c.program = in.program;
    c.mem_size = in.mem_size;
    c.memory = new_kernel_memory();
    c.tag = cl.encode(in.label, c.memory);
    for (const auto& a : in.args) {
        Tag t = cl.encode(a.mark, c.memory);
        c.args.push_back(CAtom{lower_value(a.value), t});
    }
    return c;
}

template <Lattice L>
struct LayerRun {
    Trace<L> trace;
    Status status;
    std::optional<std::string> error;  // concrete events that failed to decode
    std::vector<CEvent> raw;           // concrete events, when requested
};

template <Lattice L>
LayerRun<L> run_layer(const MachineConfig<L>& cfg, const MachineInput<L>& in, std::size_t fuel,
                      bool keep_raw = false) {
    LayerRun<L> out;
    switch (cfg.layer) {
        case Layer::Abstract: {
            auto r = run_abstract(init_abstract(in, cfg.syscalls()), fuel);
            out.trace = std::move(r.trace);
            out.status = r.status;
            break;
        }
        case Layer::Symbolic: {
            auto r = run_symbolic(cfg.table, init_abstract(in, cfg.syscalls()), fuel);
            out.trace = std::move(r.trace);
            out.status = r.status;
            break;
        }
        case Layer::Concrete: {
            auto r = run_concrete(init_concrete(lower_input(in, *cfg.cl), *cfg.kernel), fuel,
                                  cfg.kernel_budget);
            out.status = r.status;
            for (const auto& e : r.trace) {
                try {
                    out.trace.push_back(interpret_cevent(e, *cfg.cl));
                } catch (const InterpretError& err) {
                    out.error = err.what();
                    break;
                }
            }
            if (keep_raw) out.raw = std::move(r.trace);
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------- reports

struct TestReport {
    std::string campaign;
    std::uint64_t seed = 0;
    std::size_t iterations = 0;  // cases actually run
    bool passed = true;
    nlohmann::ordered_json counterexample;  // null when passed
    nlohmann::ordered_json stats = nlohmann::ordered_json::object();

    nlohmann::ordered_json to_json() const;
};

template <Lattice L>
nlohmann::ordered_json atom_json(const AAtom<L>& a) {
    return value_to_string(a.value) + "@" + to_string(a.mark);
}

template <Lattice L>
nlohmann::ordered_json trace_json(const Trace<L>& t) {
    auto j = nlohmann::ordered_json::array();
    for (const auto& e : t) j.push_back(atom_json(e));
    return j;
}

template <Lattice L>
nlohmann::ordered_json input_json(const MachineInput<L>& in) {
    nlohmann::ordered_json j;
    j["program"] = format_program(in.program);
    auto args = nlohmann::ordered_json::array();
    for (const auto& a : in.args) args.push_back(atom_json(a));
    j["args"] = args;
    j["mem_size"] = in.mem_size;
    j["label"] = to_string(in.label);
    return j;
}

template <Lattice L>
nlohmann::ordered_json run_json(const LayerRun<L>& r) {
    nlohmann::ordered_json j;
    j["trace"] = trace_json(r.trace);
    j["status"] = to_string(r.status);
    if (r.error) j["error"] = *r.error;
    return j;
}

// -------------------------------------------------------------- campaigns

template <Lattice L>
struct CampaignOptions {
    std::size_t iters = 10000;
    std::size_t fuel = 1000;
    std::uint64_t seed = 1;
    L observer = L::bot();
    GenConfig gen;
};

template <Lattice L, class F>
decltype(auto) with_rules(const MachineConfig<L>& cfg, F&& f) {
    if (cfg.layer == Layer::Abstract) return f(HardwiredRules<L>{});
    return f(TableRules<L>{&cfg.table});
}

template <Lattice L>
GenConfig effective_gen(const MachineConfig<L>& cfg, GenConfig g) {
    g.syscalls = g.syscalls || cfg.joinp;
    return g;
}

template <Lattice L>
TestReport check_tini(const MachineConfig<L>& cfg, const CampaignOptions<L>& opt) {
    TestReport rep;
    rep.campaign = "tini/" + to_string(cfg.layer);
    rep.seed = opt.seed;
    const GenConfig gen = effective_gen(cfg, opt.gen);
    std::size_t observable_events = 0, divergent_pairs = 0;
    for (std::size_t i = 0; i < opt.iters; ++i) {
        const std::uint64_t cs = mix_seed(opt.seed, i);
        auto pair = with_rules(cfg, [&](const auto& rules) {
            return gen_input_pair(cs, gen, opt.observer, rules, cfg.syscalls());
        });
        auto r1 = run_layer(cfg, pair.first, opt.fuel);
        auto r2 = run_layer(cfg, pair.second, opt.fuel);
        rep.iterations = i + 1;
        auto f1 = filter_trace(opt.observer, r1.trace);
        auto f2 = filter_trace(opt.observer, r2.trace);
        observable_events += std::min(f1.size(), f2.size());
        if (!(r1.trace == r2.trace)) ++divergent_pairs;
        const bool bad = r1.error || r2.error || !traces_indist(f1, f2);
        if (!bad) continue;
        rep.passed = false;
        auto& cx = rep.counterexample;
        cx["case"] = i;
        cx["case_seed"] = cs;
        cx["observer"] = to_string(opt.observer);
        cx["first"] = input_json(pair.first);
        cx["second"] = input_json(pair.second);
        cx["run_first"] = run_json(r1);
        cx["run_second"] = run_json(r2);
        if (auto d = first_divergence(f1, f2)) cx["divergence_index"] = *d;
        if (cfg.layer == Layer::Concrete) {
            // A concrete leak must also show up one layer up.
            auto sym = symbolic_config<L>(cfg.table, cfg.joinp);
            auto s1 = run_layer(sym, pair.first, opt.fuel);
            auto s2 = run_layer(sym, pair.second, opt.fuel);
            cx["symbolic_counterexample"] = !traces_indist(filter_trace(opt.observer, s1.trace),
                                                           filter_trace(opt.observer, s2.trace));
        }
        break;
    }
    rep.stats["observable_events_compared"] = observable_events;
    rep.stats["pairs_with_different_raw_traces"] = divergent_pairs;
    return rep;
}

// The concrete machine reports a disallowed instruction as a fault at kernel
// pc -1, and a rejected system-call argument as the kernel's bad operand;
// every other outcome carries over unchanged.
inline bool statuses_match(const Status& upper, Layer lower_layer, const Status& lower) {
    if (lower_layer == Layer::Concrete) {
        if (upper == Status::halted(HaltReason::IfcViolation))
            return lower == Status::halted(HaltReason::KernelFault);
        if (upper == Status::halted(HaltReason::SyscallFailed))
            return lower == Status::halted(HaltReason::BadOperand);
    }
    return upper == lower;
}

// Both machines are deterministic, so refinement in both directions reduces
// to matching traces: equal up to the shorter one, and equal in length when
// both runs terminated. Final statuses must correspond as well.
template <Lattice L>
TestReport check_refinement(const MachineConfig<L>& upper, const MachineConfig<L>& lower,
                            const CampaignOptions<L>& opt) {
    TestReport rep;
    rep.campaign = "refinement/" + to_string(upper.layer) + "-" + to_string(lower.layer);
    rep.seed = opt.seed;
    const GenConfig gen = effective_gen(upper, opt.gen);
    std::size_t events = 0, both_terminated = 0;
    for (std::size_t i = 0; i < opt.iters; ++i) {
        const std::uint64_t cs = mix_seed(opt.seed, i);
        auto pair = with_rules(upper, [&](const auto& rules) {
            return gen_input_pair(cs, gen, opt.observer, rules, upper.syscalls());
        });
        const MachineInput<L>& in = pair.first;
        auto ra = run_layer(upper, in, opt.fuel);
        auto rb = run_layer(lower, in, opt.fuel);
        rep.iterations = i + 1;
        events += std::min(ra.trace.size(), rb.trace.size());
        const bool terminated = ra.status.terminated() && rb.status.terminated();
        both_terminated += terminated;
        const bool bad = ra.error || rb.error || !traces_indist(ra.trace, rb.trace) ||
                         (terminated && ra.trace.size() != rb.trace.size()) ||
                         !statuses_match(ra.status, lower.layer, rb.status);
        if (!bad) continue;
        rep.passed = false;
        auto& cx = rep.counterexample;
        cx["case"] = i;
        cx["case_seed"] = cs;
        cx["input"] = input_json(in);
        cx["run_upper"] = run_json(ra);
        cx["run_lower"] = run_json(rb);
        if (auto d = first_divergence(ra.trace, rb.trace)) cx["divergence_index"] = *d;
        break;
    }
    rep.stats["events_matched"] = events;
    rep.stats["both_terminated"] = both_terminated;
    return rep;
}

// ------------------------------------------------------------- unwinding

template <Lattice L, class Rules>
struct UnwindingChecker {
    const Rules& rules;
    L o;
    std::size_t pairs = 0;
    std::string violation;

    bool fail(const std::string& what) {
        violation = what;
        return false;
    }

    // Sanity conditions that concern a related pair.
    bool sane(const AState<L>& s1, const AState<L>& s2) {
        ++pairs;
        if (!state_indist(o, s2, s1)) return fail("sanity: symmetry");
        if (state_observable(o, s1) != state_observable(o, s2))
            return fail("sanity: equal observability");
        return true;
    }

    bool action_ok(const AState<L>& s, const std::optional<Event<L>>& a) {
        if (a && observable(o, *a) && !state_observable(o, s))
            return fail("sanity: observable action from unobservable state");
        return true;
    }

    static bool action_indist(const L& o, const std::optional<Event<L>>& a,
                              const std::optional<Event<L>>& b) {
        if (a == b) return true;
        return (!a || !observable(o, *a)) && (!b || !observable(o, *b));
    }

    // Follows the two runs the way the noninterference proof does, checking
    // the unwinding condition that justifies each move.
    bool run(AState<L> s1, AState<L> s2, std::size_t fuel, Rng& rng) {
        if (!state_indist(o, s1, s2)) return fail("sanity: initial states related");
        for (std::size_t k = 0; k < fuel; ++k) {
            if (!sane(s1, s2)) return false;
            if (!state_observable(o, s1)) {
                // Step whichever side the coin picks while it stays high.
                const bool left = rng.chance(1, 2);
                AState<L>& mover = left ? s1 : s2;
                AState<L>& other = left ? s2 : s1;
                auto r = step_with(rules, mover);
                if (r.stop) {
                    auto r2 = step_with(rules, other);
                    if (r2.stop) return true;
                    if (!action_ok(other, r2.event)) return false;
                    if (state_observable(o, r2.state)) return true;
                    if (!state_indist(o, r2.state, mover)) return fail("unwinding 2 (high step)");
                    other = std::move(r2.state);
                    continue;
                }
                if (!action_ok(mover, r.event)) return false;
                if (!state_observable(o, r.state)) {
                    if (!state_indist(o, r.state, other)) return fail("unwinding 2 (high step)");
                    mover = std::move(r.state);
                    continue;
                }
                // mover returns to an observable state; run the other side
                // until it does too.
                AState<L> back = std::move(r.state);
                while (true) {
                    if (++k >= fuel) return true;
                    auto r2 = step_with(rules, other);
                    if (r2.stop) return true;
                    if (!action_ok(other, r2.event)) return false;
                    if (state_observable(o, r2.state)) {
                        if (!state_indist(o, back, r2.state))
                            return fail("unwinding 3 (high to low)");
                        mover = std::move(back);
                        other = std::move(r2.state);
                        break;
                    }
                    if (!state_indist(o, mover, r2.state)) return fail("unwinding 2 (high step)");
                    other = std::move(r2.state);
                }
                continue;
            }
            auto r1 = step_with(rules, s1);
            if (r1.stop) return true;
            if (!action_ok(s1, r1.event)) return false;
            auto r2 = step_with(rules, s2);
            if (r2.stop) return true;
            if (!action_indist(o, r1.event, r2.event))
                return fail("unwinding 1 (low step): actions differ");
            if (!state_indist(o, r1.state, r2.state))
                return fail("unwinding 1 (low step): states differ");
            s1 = std::move(r1.state);
            s2 = std::move(r2.state);
        }
        return true;
    }
};

template <Lattice L>
TestReport check_unwinding(const MachineConfig<L>& cfg, const CampaignOptions<L>& opt) {
    TestReport rep;
    rep.campaign = "unwinding/" + to_string(cfg.layer);
    rep.seed = opt.seed;
    const GenConfig gen = effective_gen(cfg, opt.gen);
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < opt.iters; ++i) {
        const std::uint64_t cs = mix_seed(opt.seed, i);
        bool ok = true;
        std::string violation;
        InputPair<L> pair;
        with_rules(cfg, [&](const auto& rules) {
            pair = gen_input_pair(cs, gen, opt.observer, rules, cfg.syscalls());
            UnwindingChecker<L, std::decay_t<decltype(rules)>> chk{rules, opt.observer, 0, {}};
            Rng rng(cs ^ 0x5bd1e995ULL);
            if (!input_indist(opt.observer, pair.first, pair.second)) {
                ok = false;
                violation = "generator produced distinguishable inputs";
            } else {
                ok = chk.run(init_abstract(pair.first, cfg.syscalls()),
                             init_abstract(pair.second, cfg.syscalls()), opt.fuel, rng);
                violation = chk.violation;
            }
            pairs += chk.pairs;
            return 0;
        });
        rep.iterations = i + 1;
        if (ok) continue;
        rep.passed = false;
        auto& cx = rep.counterexample;
        cx["case"] = i;
        cx["case_seed"] = cs;
        cx["violation"] = violation;
        cx["observer"] = to_string(opt.observer);
        cx["first"] = input_json(pair.first);
        cx["second"] = input_json(pair.second);
        break;
    }
    rep.stats["state_pairs_checked"] = pairs;
    return rep;
}

// ---------------------------------------------------------- handler oracle

template <Lattice L>
struct HandlerCase {
    Opcode op;
    CMemory mem;              // kernel memory holding encoded tags
    std::array<Tag, 4> tags;  // tpc, t1, t2, t3
};

template <Lattice L>
struct HandlerVerdict {
    bool ok = true;
    bool in_precondition = false;
    std::size_t steps = 0;
    std::string problem;
};

// Runs the handler on a freshly faulted state and compares the outcome with
// the rule table.
template <Lattice L>
HandlerVerdict<L> judge_handler_case(const RuleTable& t, const ConcreteLattice<L>& cl,
                                     const Program& handler, const HandlerCase<L>& hc,
                                     std::size_t budget) {
    HandlerVerdict<L> v;
    CState s;
    s.priv = Priv::Kernel;
    s.uimem = std::make_shared<const Program>(Program{{Op::Push, 0}});
    s.kimem = std::make_shared<const Program>(handler);
    s.mem = hc.mem;
    s.mem.alloc(Priv::User, 2, CAtom{Tag::integer(5), hc.tags[0]});
    const std::array<Tag, 5> line{Tag::integer(code(hc.op)), hc.tags[0], hc.tags[1], hc.tags[2],
                                  hc.tags[3]};
    for (std::size_t i = 0; i < line.size(); ++i)
        s.mem.store({kCacheFrame, static_cast<std::int64_t>(i)}, katom(line[i]));
    s.mem.store({kCacheFrame, CacheAddr::tag_rpc}, katom(default_tag()));
    s.mem.store({kCacheFrame, CacheAddr::tag_r}, katom(default_tag()));
    const CAtom user_pc{Tag::integer(0), hc.tags[0]};
    s.stack.emplace_back(CAtom{Tag::integer(42), hc.tags[1]});
    const CStack user_stack = s.stack;
    s.stack.emplace_back(CRetFrame{user_pc, Priv::User});
    s.pc = katom(0);
    const CMemory before = s.mem;

    KernelRun kr = run_kernel(s, budget);
    v.steps = kr.steps;
    const bool returned = !kr.stop;
    const bool faulted = kr.stop && *kr.stop == Status::halted(HaltReason::KernelFault);
    auto problem = [&](std::string p) {
        v.ok = false;
        v.problem = std::move(p);
        return v;
    };
    if (!returned && !faulted)
        return problem("handler neither returned nor faulted: " + to_string(*kr.stop));

    // Frames that existed before the handler ran must be untouched, apart
    // from the cache output cells.
    const CMemory& after = kr.state.mem;
    for (const auto& [region, frames] : before.regions()) {
        for (std::size_t i = 0; i < frames.size(); ++i) {
            FrameId<Priv> id{region, i};
            const auto& f0 = *frames[i];
            const auto* f1 = after.frame(id);
            if (!f1 || f1->size() != f0.size()) return problem("pre-existing frame resized");
            for (std::size_t k = 0; k < f0.size(); ++k) {
                if (id == kCacheFrame && k >= CacheAddr::tag_rpc) continue;
                if (!(f0[k] == (*f1)[k])) return problem("handler wrote a pre-existing cell");
            }
        }
    }

    std::optional<L> lpc = cl.decode(hc.tags[0], hc.mem);
    RVec<L> rv;
    for (int i = 0; i < 3; ++i) rv.args[i] = cl.decode(hc.tags[i + 1], hc.mem);
    std::optional<RuleResult<L>> expect;
    if (!lpc) return v;  // outside the handler's precondition: exit shape only
    rv.pc = *lpc;
    try {
        expect = apply_table(t, hc.op, rv);
    } catch (const MissingInput&) {
        return v;
    }
    v.in_precondition = true;

    const auto out = cache_output(after);
    if (!expect) {
        if (!faulted) return problem("disallowed instruction but handler returned");
        if (!(out[0] == default_tag()) || !(out[1] == default_tag()))
            return problem("disallowed instruction but cache output written");
        return v;
    }
    if (!returned) return problem("allowed instruction but handler faulted");
    if (kr.state.priv != Priv::User || !(kr.state.pc == user_pc))
        return problem("handler did not resume the user instruction");
    if (!(kr.state.stack == user_stack)) return problem("handler changed the user stack");
    auto rpc = cl.decode(out[0], after);
    auto r = cl.decode(out[1], after);
    if (!rpc || !r) return problem("cache output not decodable");
    if (!(*rpc == expect->rpc) || !(*r == expect->r))
        return problem("cache output " + to_string(*rpc) + "," + to_string(*r) + " expected " +
                       to_string(expect->rpc) + "," + to_string(expect->r));
    return v;
}

TestReport check_handler_oracle_two(const RuleTable& t,
                                    std::optional<Program> handler = std::nullopt);
TestReport check_handler_oracle_set(const RuleTable& t, std::size_t iters, std::uint64_t seed,
                                    std::optional<Program> handler = std::nullopt);

// Writes an array for the given set with shuffled order and duplicates.
Tag encode_scrambled(const PrinSet& l, CMemory& mem, Rng& rng);

// ----------------------------------------------------------------- mutants

template <Lattice L>
TestReport check_mutants(const CampaignOptions<L>& opt) {
    TestReport rep;
    rep.campaign = "mutants";
    rep.seed = opt.seed;
    auto killed = nlohmann::ordered_json::object();
    for (const auto& m : mutants()) {
        auto r = check_tini(symbolic_config<L>(m.table), opt);
        rep.iterations += r.iterations;
        nlohmann::ordered_json e;
        e["killed"] = !r.passed;
        e["iterations"] = r.iterations;
        if (!r.passed) e["case_seed"] = r.counterexample["case_seed"];
        killed[m.name] = e;
        if (r.passed) rep.passed = false;
    }
    rep.stats["mutants"] = killed;
    if (!rep.passed) rep.counterexample = {{"surviving_mutants", killed}};
    return rep;
}

// Handler with the pc taint dropped from the output rule's result label:
// one immediate changed, so that rule computes LAB_1 join LAB_1.
Program corrupt_handler(const Program& handler, const RuleTable& t, const LatticeCode& lc);

}  // namespace ifc
