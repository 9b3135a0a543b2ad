#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ifc/verify.hpp"

using namespace ifc;

namespace {

using TP = TwoPoint;
const TP B = TP::bot(), T = TP::top();

AAtom<TP> at(std::int64_t n, TP l) { return int_atom<TP>(n, l); }

AState<TP> state(Program p, std::vector<AAtom<TP>> args, std::size_t mem = 0, TP label = B) {
    return init_abstract(MachineInput<TP>{std::move(p), std::move(args), mem, label});
}

template <Lattice L>
CampaignOptions<L> opts(std::size_t iters, std::uint64_t seed = 1) {
    CampaignOptions<L> o;
    o.iters = iters;
    o.seed = seed;
    return o;
}

}  // namespace

TEST_CASE("trace filtering") {
    CHECK(filter_trace(B, Trace<TP>{at(3, B), at(5, T)}) == Trace<TP>{at(3, B)});
    CHECK(filter_trace(T, Trace<TP>{at(3, B), at(5, T)}) == Trace<TP>{at(3, B), at(5, T)});
    CHECK(filter_trace(B, Trace<TP>{}).empty());
}

TEST_CASE("trace indistinguishability") {
    CHECK(traces_indist(Trace<TP>{at(1, B)}, Trace<TP>{at(1, B), at(2, B)}));
    CHECK_FALSE(traces_indist(Trace<TP>{at(1, B)}, Trace<TP>{at(2, B)}));
    CHECK(traces_indist(Trace<TP>{}, Trace<TP>{at(2, B)}));
}

TEST_CASE("state indistinguishability") {
    auto s = state({{Op::Push, 0}}, {at(1, T), at(2, B)}, 2);
    CHECK(state_indist(B, s, s));

    // High pc, differing data above the last observable return frame.
    auto h1 = state({{Op::Push, 0}}, {at(2, B)});
    h1.stack.emplace_back(RetFrame<TP, TP>{at(4, B), Priv::User});
    auto h2 = h1;
    h1.stack.emplace_back(at(7, B));
    h2.stack.emplace_back(at(8, T));
    h2.stack.emplace_back(at(9, T));
    h1.pc = at(3, T);
    h2.pc = at(0, T);
    CHECK(state_indist(B, h1, h2));
    h2.stack[0] = at(3, B);
    CHECK_FALSE(state_indist(B, h1, h2));

    // Low states whose low memories differ.
    auto m1 = state({{Op::Push, 0}}, {}, 1);
    auto m2 = m1;
    m2.mem.store({{B, 0}, 0}, at(5, B));
    CHECK_FALSE(state_indist(B, m1, m2));
    m2.mem.store({{B, 0}, 0}, at(5, T));
    m1.mem.store({{B, 0}, 0}, at(6, T));
    CHECK(state_indist(B, m1, m2));

    auto lo = state({{Op::Push, 0}}, {});
    auto hi = lo;
    hi.pc = at(0, T);
    CHECK_FALSE(state_indist(B, lo, hi));
}

TEST_CASE("stack cropping keeps the most recent observable frame") {
    AStack<TP> st{at(1, B), RetFrame<TP, TP>{at(2, B), Priv::User}, at(3, T),
                  RetFrame<TP, TP>{at(4, T), Priv::User}, at(5, B)};
    CHECK(crop_stack(B, st).size() == 2);
    CHECK(crop_stack(T, st).size() == 4);
    CHECK(crop_stack(B, AStack<TP>{at(1, B)}).empty());
}

TEST_CASE("input generation") {
    GenConfig g;
    auto a = gen_input_pair(7, g, B, HardwiredRules<TP>{});
    auto b = gen_input_pair(7, g, B, HardwiredRules<TP>{});
    CHECK(a.first.program == b.first.program);
    CHECK(a.first.args == b.first.args);
    CHECK(a.second.args == b.second.args);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        auto p = gen_input_pair(seed, g, B, HardwiredRules<TP>{});
        CHECK(input_indist(B, p.first, p.second));
        auto q = gen_input_pair(seed, g, T, HardwiredRules<TP>{});
        CHECK(q.first.args == q.second.args);
        CHECK(p.first.program.size() <= g.max_len);
    }
    GenConfig sg;
    sg.syscalls = true;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        auto p = gen_input_pair(seed, sg, PrinSet{0}, HardwiredRules<PrinSet>{}, joinp_syscalls());
        CHECK(input_indist(PrinSet{0}, p.first, p.second));
    }
}

TEST_CASE("generated programs run for a while") {
    GenConfig g;
    std::size_t steps = 0;
    const std::size_t n = 1000;
    for (std::uint64_t seed = 0; seed < n; ++seed) {
        auto p = gen_input_pair(seed, g, B, HardwiredRules<TP>{});
        steps += run_abstract(init_abstract(p.first), 100).steps;
    }
    CHECK(steps >= 10 * n);
}

TEST_CASE("event interpretation") {
    const auto two = two_point_clattice();
    CMemory m = new_kernel_memory();
    CHECK(interpret_cevent(CEvent{{Tag::integer(4), Tag::integer(1)}, m}, two) == at(4, T));
    CHECK_THROWS_AS(interpret_cevent(CEvent{{Tag::integer(4), default_tag()}, m}, two),
                    InterpretError);
    const auto set = prinset_clattice();
    Rng rng(1);
    const Tag t = encode_scrambled(PrinSet{0, 2}, m, rng);
    CHECK(interpret_cevent(CEvent{{Tag::integer(4), t}, m}, set) ==
          int_atom<PrinSet>(4, PrinSet{0, 2}));
}

TEST_CASE("report JSON") {
    auto r = check_tini(abstract_config<TP>(), opts<TP>(20));
    auto j = r.to_json();
    CHECK(j["campaign"] == "tini/abstract");
    CHECK(j["verdict"] == "pass");
    CHECK(j["iterations"] == 20);
    CHECK(j["counterexample"].is_null());
}

TEST_CASE("noninterference campaigns") {
    CHECK(check_tini(abstract_config<TP>(), opts<TP>(2000)).passed);
    CHECK(check_tini(symbolic_config<TP>(rabs()), opts<TP>(2000)).passed);
    CHECK(check_tini(concrete_config<TP>(rabs()), opts<TP>(300)).passed);
    CHECK(check_tini(abstract_config<PrinSet>(true), opts<PrinSet>(2000)).passed);
    CHECK(check_tini(concrete_config<PrinSet>(rabs(), true), opts<PrinSet>(200)).passed);
}

TEST_CASE("a leaky table is caught") {
    for (const auto& m : mutants()) {
        if (m.name != "output-no-pc-taint") continue;
        auto r = check_tini(symbolic_config<TP>(m.table), opts<TP>(10000));
        CHECK_FALSE(r.passed);
        CHECK(r.counterexample.contains("divergence_index"));
    }
}

TEST_CASE("a leak found on the concrete machine is found one layer up") {
    for (const auto& m : mutants()) {
        if (m.name != "add-drop-l2") continue;
        auto r = check_tini(concrete_config<TP>(m.table), opts<TP>(10000));
        REQUIRE_FALSE(r.passed);
        CHECK(r.counterexample["symbolic_counterexample"] == true);
    }
}

TEST_CASE("identical inputs never leak") {
    auto mc = abstract_config<TP>();
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        auto p = gen_input_pair(seed, GenConfig{}, B, HardwiredRules<TP>{});
        auto r1 = run_layer(mc, p.first, 200), r2 = run_layer(mc, p.first, 200);
        CHECK(r1.trace == r2.trace);
    }
}

TEST_CASE("refinement campaigns") {
    CHECK(check_refinement(abstract_config<TP>(), symbolic_config<TP>(rabs()), opts<TP>(2000))
              .passed);
    CHECK(check_refinement(symbolic_config<TP>(rabs()), concrete_config<TP>(rabs()), opts<TP>(300))
              .passed);
    CHECK(check_refinement(symbolic_config<PrinSet>(rabs(), true),
                           concrete_config<PrinSet>(rabs(), true), opts<PrinSet>(200))
              .passed);
}

TEST_CASE("a corrupted handler is caught") {
    const auto lc = two_point_clattice().code;
    const Program good = gen_fault_handler(rabs(), lc);
    const Program bad = corrupt_handler(good, rabs(), lc);
    std::size_t diffs = 0;
    for (std::size_t i = 0; i < good.size(); ++i) diffs += !(good[i] == bad[i]);
    CHECK(diffs == 1);
    auto r = check_refinement(symbolic_config<TP>(rabs()), concrete_config<TP>(rabs(), false, bad),
                              opts<TP>(10000));
    CHECK_FALSE(r.passed);
    CHECK_FALSE(check_handler_oracle_two(rabs(), bad).passed);
}

TEST_CASE("handler oracle") {
    auto two = check_handler_oracle_two(rabs());
    CHECK(two.passed);
    CHECK(two.iterations == 17 * 81);
    CHECK(two.stats["max_kernel_steps"].get<std::size_t>() <= 200);
    CHECK(check_handler_oracle_set(rabs(), 300, 3).passed);
    for (const auto& m : mutants()) CHECK(check_handler_oracle_two(m.table).passed);
}

TEST_CASE("unwinding") {
    CHECK(check_unwinding(abstract_config<TP>(), opts<TP>(2000)).passed);
    CHECK(check_unwinding(abstract_config<PrinSet>(true), opts<PrinSet>(1000)).passed);
    for (const auto& m : mutants()) {
        if (m.name != "bnz-no-pc-raise") continue;
        auto r = check_unwinding(symbolic_config<TP>(m.table), opts<TP>(10000));
        CHECK_FALSE(r.passed);
    }
    // Identical states satisfy every condition.
    HardwiredRules<TP> rules;
    UnwindingChecker<TP, HardwiredRules<TP>> same{rules, B, 0, {}};
    Rng rng(1);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        auto p = gen_input_pair(seed, GenConfig{}, B, rules);
        auto s = init_abstract(p.first);
        CHECK(same.run(s, s, 200, rng));
    }
}
