#include "ifc/verify.hpp"

#include <algorithm>

namespace ifc {

std::string to_string(Layer l) {
    switch (l) {
        case Layer::Abstract: return "abstract";
        case Layer::Symbolic: return "symbolic";
        case Layer::Concrete: return "concrete";
    }
    return "?";
}

nlohmann::ordered_json TestReport::to_json() const {
    nlohmann::ordered_json j;
    j["campaign"] = campaign;
    j["seed"] = seed;
    j["iterations"] = iterations;
    j["verdict"] = passed ? "pass" : "fail";
    j["counterexample"] = passed ? nlohmann::ordered_json() : counterexample;
    j["stats"] = stats;
    return j;
}

namespace {

Program handler_or_default(const RuleTable& t, const LatticeCode& lc,
                           const std::optional<Program>& handler) {
    return handler ? *handler : gen_fault_handler(t, lc);
}

template <Lattice L>
nlohmann::ordered_json case_json(const HandlerCase<L>& hc, const ConcreteLattice<L>& cl,
                                 const HandlerVerdict<L>& v) {
    nlohmann::ordered_json j;
    j["opcode"] = opcode_name(hc.op);
    auto tags = nlohmann::ordered_json::array();
    for (const auto& t : hc.tags) {
        auto l = cl.decode(t, hc.mem);
        tags.push_back(l ? to_string(*l) : render_tag(t));
    }
    j["tags"] = tags;  // pc, 1, 2, 3
    j["problem"] = v.problem;
    j["kernel_steps"] = v.steps;
    return j;
}

bool mentions(const LExpr& e, LabelVar v) {
    switch (e.kind()) {
        case LExpr::Kind::Bot: return false;
        case LExpr::Kind::Var: return e.var() == v;
        case LExpr::Kind::Join: return mentions(e.lhs(), v) || mentions(e.rhs(), v);
    }
    return false;
}

bool mentions(const BExpr& b, LabelVar v) {
    switch (b.kind()) {
        case BExpr::Kind::True: return false;
        case BExpr::Kind::Flows: return mentions(b.flow_lhs(), v) || mentions(b.flow_rhs(), v);
        case BExpr::Kind::And:
        case BExpr::Kind::Or: return mentions(b.lhs(), v) || mentions(b.rhs(), v);
    }
    return false;
}

bool mentions(const SymRule& r, LabelVar v) {
    return mentions(r.allow, v) || mentions(r.erpc, v) || (r.er && mentions(*r.er, v));
}

}  // namespace

TestReport check_handler_oracle_two(const RuleTable& t, std::optional<Program> handler) {
    TestReport rep;
    rep.campaign = "handler-oracle/two";
    const auto cl = two_point_clattice();
    const Program h = handler_or_default(t, cl.code, handler);
    const std::array<Tag, 3> choices{Tag::integer(0), Tag::integer(1), default_tag()};
    std::size_t in_pre = 0, max_steps = 0;
    for (Opcode op : rule_opcodes()) {
        if (!t.rule(op)) continue;
        for (std::size_t k = 0; k < 81; ++k) {
            HandlerCase<TwoPoint> hc{op, new_kernel_memory(), {}};
            std::size_t x = k;
            for (auto& tag : hc.tags) {
                tag = choices[x % 3];
                x /= 3;
            }
            auto v = judge_handler_case(t, cl, h, hc, kTwoPointKernelBudget);
            ++rep.iterations;
            in_pre += v.in_precondition;
            max_steps = std::max(max_steps, v.steps);
            if (v.ok) continue;
            rep.passed = false;
            rep.counterexample = case_json(hc, cl, v);
            break;
        }
        if (!rep.passed) break;
    }
    rep.stats["cases_in_precondition"] = in_pre;
    rep.stats["max_kernel_steps"] = max_steps;
    return rep;
}

Tag encode_scrambled(const PrinSet& l, CMemory& mem, Rng& rng) {
    std::vector<Principal> ps = l.elements();
    for (std::size_t i = 0, n = ps.size(); i < n; ++i)
        if (rng.chance(1, 3)) ps.push_back(ps[i]);
    for (std::size_t i = ps.size(); i > 1; --i) std::swap(ps[i - 1], ps[rng.below(i)]);
    // Some arrays sit at a nonzero offset behind padding.
    const std::size_t pad = rng.chance(1, 4) ? 1 + rng.below(2) : 0;
    auto id = mem.alloc(Priv::Kernel, pad + ps.size() + 1, katom(7));
    mem.store({id, static_cast<std::int64_t>(pad)}, katom(static_cast<std::int64_t>(ps.size())));
    for (std::size_t i = 0; i < ps.size(); ++i)
        mem.store({id, static_cast<std::int64_t>(pad + i + 1)}, katom(ps[i]));
    return Tag::pointer(id, static_cast<std::int64_t>(pad));
}

TestReport check_handler_oracle_set(const RuleTable& t, std::size_t iters, std::uint64_t seed,
                                    std::optional<Program> handler) {
    TestReport rep;
    rep.campaign = "handler-oracle/set";
    rep.seed = seed;
    const auto cl = prinset_clattice();
    const Program h = handler_or_default(t, cl.code, handler);
    std::vector<Opcode> ops;
    for (Opcode op : rule_opcodes())
        if (t.rule(op)) ops.push_back(op);
    std::size_t in_pre = 0, max_steps = 0;
    for (std::size_t i = 0; i < iters && !ops.empty(); ++i) {
        Rng rng(mix_seed(seed, i));
        HandlerCase<PrinSet> hc{ops[i % ops.size()], new_kernel_memory(), {}};
        const std::array<LabelVar, 4> vars{LabelVar::Pc, LabelVar::L1, LabelVar::L2,
                                           LabelVar::L3};
        for (std::size_t k = 0; k < hc.tags.size(); ++k) {
            Tag& tag = hc.tags[k];
            // The machine only leaves the default tag in slots the rule ignores.
            if (!mentions(*t.rule(hc.op), vars[k]) && rng.chance(1, 2)) {
                tag = default_tag();
                continue;
            }
            PrinSet l = LabelSpace<PrinSet>::random(rng, 3);
            tag = encode_scrambled(l, hc.mem, rng);
        }
        auto v = judge_handler_case(t, cl, h, hc, kPrinSetKernelBudget);
        ++rep.iterations;
        in_pre += v.in_precondition;
        max_steps = std::max(max_steps, v.steps);
        if (v.ok) continue;
        rep.passed = false;
        rep.counterexample = case_json(hc, cl, v);
        rep.counterexample["case"] = i;
        break;
    }
    rep.stats["cases_in_precondition"] = in_pre;
    rep.stats["max_kernel_steps"] = max_steps;
    return rep;
}

Program corrupt_handler(const Program& handler, const RuleTable& t, const LatticeCode& lc) {
    const SymRule* rule = t.rule(Opcode::Output);
    if (!rule) throw std::invalid_argument("table has no output rule");
    const CodeSeq seq = gen_apply_rule(*rule, lc);
    auto at = std::search(handler.begin(), handler.end(), seq.begin(), seq.end());
    if (at == handler.end()) throw std::invalid_argument("output rule code not found");
    Program out = handler;
    const auto base = at - handler.begin();
    int seen = 0;
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
        if (seq[i].op == Op::PushCachePtr && seq[i + 1].op == Op::Push &&
            seq[i + 1].imm == CacheAddr::tag_pc && ++seen == 2) {
            out[static_cast<std::size_t>(base) + i + 1].imm = CacheAddr::tag1;
            return out;
        }
    }
    throw std::invalid_argument("output rule does not load the pc label twice");
}

}  // namespace ifc
