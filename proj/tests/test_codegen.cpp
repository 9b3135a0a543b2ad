#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ifc/codegen.hpp"
#include "ifc/machine_abstract.hpp"
#include "ifc/verify.hpp"
#include "properties.hpp"
#include "support.hpp"

using namespace ifc;
using namespace ifc::testing;

namespace {

Tag ti(std::int64_t n) { return Tag::integer(n); }

std::vector<Tag> tags(std::initializer_list<std::int64_t> xs) {
    std::vector<Tag> out;
    for (auto x : xs) out.push_back(ti(x));
    return out;
}

}  // namespace

TEST_CASE("leaf generators") {
    CHECK(values(run_fragment(gen_and(), kstack({1, 0})).state.stack) == tags({0}));
    CHECK(values(run_fragment(gen_equal(), kstack({5, 5})).state.stack) == tags({1}));
    CHECK(values(run_fragment(gen_none(), kstack({4})).state.stack) == tags({0, 4}));
}

TEST_CASE("skips") {
    CHECK(gen_skip_if(0) == CodeSeq{{Op::Bnz, 1}});
    auto f = run_fragment(gen_skip(2) + CodeSeq{{Op::Push, 7}, {Op::Push, 8}, {Op::Push, 9}}, {});
    CHECK(values(f.state.stack) == tags({9}));
    auto g = run_fragment(gen_skip_if(3) + CodeSeq{{Op::Push, 7}}, kstack({0}));
    CHECK(values(g.state.stack) == tags({7}));
}

TEST_CASE("conditionals") {
    CHECK(gen_if({{Op::Ret, 0}}, {{Op::Push, -1}, {Op::Jump, 0}}) ==
          CodeSeq{{Op::Bnz, 5}, {Op::Push, -1}, {Op::Jump, 0}, {Op::Push, 1}, {Op::Bnz, 2},
                  {Op::Ret, 0}});
    const CodeSeq c = gen_if({{Op::Push, 7}}, {{Op::Push, 8}});
    CHECK(top_int(run_fragment(c, kstack({1}))) == 7);
    CHECK(top_int(run_fragment(c, kstack({0}))) == 8);
}

TEST_CASE("indexed cases") {
    auto guard = [](std::int64_t k) { return CodeSeq{{Op::Dup, 0}, {Op::Push, k}} + gen_equal(); };
    auto body = [](std::int64_t k) { return CodeSeq{{Op::Push, 100 + k}}; };
    const CodeSeq dflt{{Op::Push, -5}};
    CHECK(top_int(run_fragment(gen_indexed_cases(dflt, guard, body, {2, 3}), kstack({3}))) == 103);
    CHECK(top_int(run_fragment(gen_indexed_cases(dflt, guard, body, {}), kstack({3}))) == -5);
    CHECK(top_int(run_fragment(gen_indexed_cases(dflt, guard, body, {1, 2}), kstack({3}))) == -5);
}

TEST_CASE("loops") {
    // Counter cell 0 of a fresh frame, incremented by the body.
    const CodeSeq inc = {{Op::Dup, 1}, {Op::Dup, 0}, {Op::Load, 0}, {Op::Push, 1},
                         {Op::Add, 0}, {Op::Swap, 1}, {Op::Store, 0}};
    auto run_count = [&](std::int64_t n) {
        CodeSeq code = CodeSeq{{Op::Push, 0}, {Op::Push, 1}, {Op::Alloc, 0}, {Op::Push, n}} +
                       gen_for(inc) + CodeSeq{{Op::Pop, 0}, {Op::Load, 0}};
        return top_int(run_fragment(code, {}));
    };
    CHECK(run_count(3) == 3);
    CHECK(run_count(0) == 0);
}

TEST_CASE("generator property suites") {
    CHECK(check_leaf_generators(1000, 11) == std::nullopt);
    CHECK(check_skip_if(1000, 12) == std::nullopt);
    CHECK(check_if(1000, 13) == std::nullopt);
    CHECK(check_indexed_cases(1000, 14) == std::nullopt);
    CHECK(check_for(1000, 15) == std::nullopt);
}

TEST_CASE("rule expressions on the two-point encoding") {
    const auto lc = two_point_clattice().code;
    CMemory m = cache_with({ti(0), ti(0), ti(0), ti(1), default_tag()});
    CHECK(top_int(run_fragment(gen_elab(LExpr::join(LExpr::lab(1), LExpr::lab(2)), lc), {}, m)) == 1);
    CHECK(top_int(run_fragment(gen_bool(BExpr::tt(), lc), {})) == 1);
    CMemory m2 = cache_with({ti(0), ti(0), ti(1), ti(0), default_tag()});
    CHECK(top_int(run_fragment(gen_bool(BExpr::flows(LExpr::lab(1), LExpr::pc()), lc), {}, m2)) ==
          0);
}

TEST_CASE("two-point tag operations") {
    const auto cl = two_point_clattice();
    CMemory m;
    CHECK(cl.decode(cl.encode(TwoPoint::top(), m), m) == TwoPoint::top());
    CHECK(cl.decode(ti(1), m) == TwoPoint::top());
    CHECK_FALSE(cl.decode(default_tag(), m).has_value());
    CHECK(top_int(run_fragment(cl.code.join, kstack({0, 1}))) == 1);
    CHECK(top_int(run_fragment(cl.code.flows, kstack({1, 0}))) == 0);
    CHECK(top_int(run_fragment(cl.code.flows, kstack({0, 1}))) == 1);
}

namespace {

// Writes an explicit array [n, elems...] into a fresh kernel frame.
Tag array_tag(CMemory& m, const std::vector<std::int64_t>& elems) {
    auto id = m.alloc(Priv::Kernel, elems.size() + 1, katom(static_cast<std::int64_t>(elems.size())));
    for (std::size_t i = 0; i < elems.size(); ++i)
        m.store({id, static_cast<std::int64_t>(i + 1)}, katom(elems[i]));
    return Tag::pointer(id, 0);
}

}  // namespace

TEST_CASE("principal-set tag operations") {
    const auto cl = prinset_clattice();
    CMemory m = new_kernel_memory();
    const Tag a = array_tag(m, {1}), b = array_tag(m, {2});
    auto j = run_fragment(cl.code.join, CStack{katom(b), katom(a)}, m);
    REQUIRE_FALSE(j.stop.has_value());
    const Tag jt = std::get<CAtom>(j.state.stack.back()).value;
    CHECK(cl.decode(jt, j.state.mem) == PrinSet{1, 2});

    const Tag x = array_tag(m, {1, 2}), y = array_tag(m, {2, 1, 1});
    CHECK(top_int(run_fragment(cl.code.flows, CStack{katom(y), katom(x)}, m)) == 1);
    CHECK(top_int(run_fragment(cl.code.flows, CStack{katom(x), katom(y)}, m)) == 1);
    const Tag z = array_tag(m, {3});
    CHECK(top_int(run_fragment(cl.code.flows, CStack{katom(x), katom(z)}, m)) == 0);

    auto bot = run_fragment(cl.code.bot, {}, m);
    CHECK(cl.decode(std::get<CAtom>(bot.state.stack.back()).value, bot.state.mem) == PrinSet{});

    CHECK(cl.decode(cl.encode(PrinSet{4, 2}, m), m) == PrinSet{2, 4});
    CHECK_FALSE(cl.decode(ti(1), m).has_value());
    CHECK_FALSE(cl.decode(Tag::pointer(kCacheFrame, 0), m).has_value());
    CHECK(cl.decode(array_tag(m, {2, 2, 1}), m) == PrinSet{1, 2});
}

TEST_CASE("joins do not grow arrays with repeated elements") {
    const auto cl = prinset_clattice();
    CMemory m = new_kernel_memory();
    Tag t = array_tag(m, {1, 2});
    for (int i = 0; i < 5; ++i) {
        auto j = run_fragment(cl.code.join, CStack{katom(t), katom(t)}, m);
        REQUIRE_FALSE(j.stop.has_value());
        m = j.state.mem;
        t = std::get<CAtom>(j.state.stack.back()).value;
    }
    CHECK(std::get<CAtom>(run_fragment({{Op::Load, 0}}, CStack{katom(t)}, m).state.stack.back())
              .value == ti(2));
}

TEST_CASE("fault handler") {
    const auto cl = two_point_clattice();
    const Program h = gen_fault_handler(rabs(), cl.code);
    REQUIRE(h.size() >= 6);
    CHECK(Program(h.end() - 6, h.end()) ==
          Program{{Op::Bnz, 5}, {Op::Push, -1}, {Op::Jump, 0}, {Op::Push, 1}, {Op::Bnz, 2},
                  {Op::Ret, 0}});
    CHECK(gen_fault_handler(rabs(), cl.code) == h);

    HandlerCase<TwoPoint> add{Opcode::Add, new_kernel_memory(), {ti(0), ti(1), ti(1), default_tag()}};
    auto v = judge_handler_case(rabs(), cl, h, add, kTwoPointKernelBudget);
    CHECK(v.ok);
    CHECK(v.in_precondition);

    HandlerCase<TwoPoint> store{Opcode::Store, new_kernel_memory(), {ti(1), ti(0), ti(0), ti(0)}};
    auto w = judge_handler_case(rabs(), cl, h, store, kTwoPointKernelBudget);
    CHECK(w.ok);
    CHECK(w.in_precondition);
}

TEST_CASE("set lattice handler loops") {
    const Program h = gen_fault_handler(rabs(), prinset_clattice().code);
    bool back_edge = false;
    for (const auto& i : h) back_edge = back_edge || (i.op == Op::Bnz && i.imm < 0);
    CHECK(back_edge);
}

TEST_CASE("joinP kernel routine") {
    auto mc = concrete_config<PrinSet>(rabs(), true);
    MachineInput<PrinSet> in{{{Op::SysCall, kJoinPId}, {Op::Output, 0}},
                             {int_atom<PrinSet>(1, {}), int_atom<PrinSet>(5, {})}, 0, {}};
    auto r = run_layer(mc, in, 10);
    CHECK(r.trace == Trace<PrinSet>{int_atom<PrinSet>(5, PrinSet{1})});
    CHECK(r.status == Status::clean_stop());
}

TEST_CASE("joinP agrees with the abstract system call") {
    auto mc = concrete_config<PrinSet>(rabs(), true);
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        auto q = int_atom<PrinSet>(rng.range(-1, 4), random_set(rng, 3));
        auto v = int_atom<PrinSet>(rng.range(-9, 9), random_set(rng, 3));
        MachineInput<PrinSet> in{{{Op::SysCall, kJoinPId}, {Op::Output, 0}}, {q, v}, 0, {}};
        auto expect = joinp({q, v});
        auto r = run_layer(mc, in, 10);
        if (expect) {
            CHECK(r.trace == Trace<PrinSet>{*expect});
        } else {
            CHECK(r.trace.empty());
            CHECK(r.status == Status::halted(HaltReason::BadOperand));
        }
    }
}

TEST_CASE("joinP writes only frames it allocates") {
    auto mc = concrete_config<PrinSet>(rabs(), true);
    MachineInput<PrinSet> in{{{Op::SysCall, kJoinPId}}, {int_atom<PrinSet>(2, PrinSet{1}),
                                                        int_atom<PrinSet>(5, PrinSet{0})}, 1, {}};
    CState s = init_concrete(lower_input(in, *mc.cl), *mc.kernel);
    const CMemory before = s.mem;
    auto r = run_concrete(s, 1, mc.kernel_budget);
    REQUIRE(r.status == Status::exhausted());
    for (const auto& [region, frames] : before.regions())
        for (std::size_t i = 0; i < frames.size(); ++i)
            CHECK(*r.final.mem.frame({region, i}) == *frames[i]);
}
