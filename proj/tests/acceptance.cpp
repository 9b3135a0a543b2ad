// Acceptance run: one PASS/FAIL line per criterion, with its wall time
// checked against a fixed limit. Exits nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>

#include "ifc/verify.hpp"
#include "properties.hpp"

using namespace ifc;
using namespace ifc::testing;

namespace {

constexpr std::size_t kIters = 10000;
constexpr std::size_t kFuel = 1000;
constexpr std::uint64_t kSeed = 1;

struct Outcome {
    bool ok = true;
    std::string detail;
};

Outcome from_report(const TestReport& r) {
    if (r.passed) return {};
    return {false, r.campaign + ": " + r.counterexample.dump()};
}

Outcome all_of(std::initializer_list<Outcome> os) {
    for (const auto& o : os)
        if (!o.ok) return o;
    return {};
}

Outcome from_failure(const Failure& f) {
    if (!f) return {};
    return {false, *f};
}

template <Lattice L>
CampaignOptions<L> options() {
    CampaignOptions<L> o;
    o.iters = kIters;
    o.fuel = kFuel;
    o.seed = kSeed;
    return o;
}

// A user state about to execute an Add at pc n on operands 7@1 and 5@1.
CState add_state(const KernelImage& k, std::int64_t n) {
    Program p(static_cast<std::size_t>(n), Instr{Op::Push, 0});
    p.push_back({Op::Add, 0});
    CInput in{p, {{Tag::integer(7), Tag::integer(1)}, {Tag::integer(5), Tag::integer(1)}}, 0,
              Tag::integer(0)};
    CState s = init_concrete(in, k);
    s.pc = {Tag::integer(n), Tag::integer(0)};
    return s;
}

Outcome golden_example() {
    const KernelImage k = build_kernel(rabs(), two_point_clattice().code, false);
    const std::int64_t n = 4;
    auto miss = step_concrete(add_state(k, n));
    if (!miss.stepped() || miss.state.priv != Priv::Kernel) return {false, "no cache miss"};
    const std::array<Tag, 5> input{Tag::integer(code(Opcode::Add)), Tag::integer(0),
                                   Tag::integer(1), Tag::integer(1), default_tag()};
    if (cache_input(miss.state.mem) != input) return {false, "wrong cache input line"};
    KernelRun kr = run_kernel(miss.state, kTwoPointKernelBudget);
    if (kr.stop) return {false, "handler stopped with " + to_string(*kr.stop)};
    if (kr.state.priv != Priv::User || !(kr.state.pc == CAtom{Tag::integer(n), Tag::integer(0)}))
        return {false, "handler did not return to the faulting instruction"};
    if (cache_output(kr.state.mem) != std::array<Tag, 2>{Tag::integer(0), Tag::integer(1)})
        return {false, "wrong cache output cells"};
    auto hit = step_concrete(kr.state);
    if (!hit.stepped() || hit.state.priv != Priv::User) return {false, "restart missed again"};
    if (!(hit.state.stack == CStack{CAtom{Tag::integer(12), Tag::integer(1)}}))
        return {false, "wrong stack after restart"};
    if (!(hit.state.pc == CAtom{Tag::integer(n + 1), Tag::integer(0)}))
        return {false, "wrong pc after restart"};
    return {};
}

// Exact agreement of traces and statuses, not merely matching prefixes.
template <Lattice L>
Outcome abstract_equals_symbolic(bool joinp) {
    const auto a = abstract_config<L>(joinp);
    const auto s = symbolic_config<L>(rabs(), joinp);
    const GenConfig gen = effective_gen(a, GenConfig{});
    for (std::size_t i = 0; i < kIters; ++i) {
        const std::uint64_t cs = mix_seed(kSeed, i);
        auto pair = gen_input_pair(cs, gen, L::bot(), HardwiredRules<L>{}, a.syscalls());
        auto ra = run_layer(a, pair.first, kFuel);
        auto rs = run_layer(s, pair.first, kFuel);
        if (ra.error || rs.error || !(ra.trace == rs.trace) || !(ra.status == rs.status))
            return {false, "case " + std::to_string(i) + " (seed " + std::to_string(cs) +
                               "): " + run_json(ra).dump() + " vs " + run_json(rs).dump()};
    }
    return {};
}

Outcome handler_oracle() {
    return all_of({from_report(check_handler_oracle_two(rabs())),
                   from_report(check_handler_oracle_set(rabs(), 1000, kSeed))});
}

Outcome refinement() {
    return all_of({from_report(check_refinement(symbolic_config<TwoPoint>(rabs()),
                                                concrete_config<TwoPoint>(rabs()),
                                                options<TwoPoint>())),
                   from_report(check_refinement(symbolic_config<PrinSet>(rabs(), true),
                                                concrete_config<PrinSet>(rabs(), true),
                                                options<PrinSet>()))});
}

template <Lattice L>
Outcome tini_all_layers(bool joinp) {
    return all_of({from_report(check_tini(abstract_config<L>(joinp), options<L>())),
                   from_report(check_tini(symbolic_config<L>(rabs(), joinp), options<L>())),
                   from_report(check_tini(concrete_config<L>(rabs(), joinp), options<L>()))});
}

Outcome unwinding() {
    return all_of({from_report(check_unwinding(abstract_config<TwoPoint>(), options<TwoPoint>())),
                   from_report(check_unwinding(abstract_config<PrinSet>(true), options<PrinSet>()))});
}

Outcome tester_power() {
    auto m = check_mutants(options<TwoPoint>());
    if (!m.passed) return {false, m.counterexample.dump()};
    const auto cl = two_point_clattice();
    const Program bad = corrupt_handler(gen_fault_handler(rabs(), cl.code), rabs(), cl.code);
    auto r = check_refinement(symbolic_config<TwoPoint>(rabs()),
                              concrete_config<TwoPoint>(rabs(), false, bad), options<TwoPoint>());
    if (r.passed) return {false, "corrupted handler survived 10000 refinement iterations"};
    return {};
}

Outcome generator_properties() {
    constexpr std::size_t n = 1000;
    return all_of({from_failure(check_leaf_generators(n, kSeed)),
                   from_failure(check_skip_if(n, kSeed)), from_failure(check_if(n, kSeed)),
                   from_failure(check_indexed_cases(n, kSeed)), from_failure(check_for(n, kSeed))});
}

Outcome lattice_properties() {
    return all_of({from_failure(check_two_point_laws()),
                   from_failure(check_prinset_laws(10000, kSeed))});
}

struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    const Criterion cs[] = {
        {1, "golden miss/handler/restart/hit example", 1, golden_example},
        {2, "abstract and symbolic machines agree", 60,
         [] {
             return all_of({abstract_equals_symbolic<TwoPoint>(false),
                            abstract_equals_symbolic<PrinSet>(true)});
         }},
        {3, "fault handler matches the rule table", 60, handler_oracle},
        {4, "concrete machine refines the symbolic machine", 300, refinement},
        {5, "TINI on every layer and lattice", 600,
         [] { return all_of({tini_all_layers<TwoPoint>(false), tini_all_layers<PrinSet>(true)}); }},
        {6, "unwinding conditions", 120, unwinding},
        {7, "mutants and corrupted handler are caught", 600, tester_power},
        {8, "code generator properties", 60, generator_properties},
        {9, "lattice laws", 10, lattice_properties},
    };
    int failures = 0;
    for (const auto& c : cs) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (o.ok && secs > c.limit_s) o = {false, "took longer than the limit"};
        failures += !o.ok;
        std::printf("%s %d %s (%.2fs, limit %.0fs)\n", o.ok ? "PASS" : "FAIL", c.id, c.name, secs,
                    c.limit_s);
        if (!o.ok) std::printf("  %s\n", o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
