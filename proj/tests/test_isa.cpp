#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ifc/isa.hpp"
#include "ifc/lattice.hpp"

using namespace ifc;

TEST_CASE("parse_program maps mnemonics and immediates") {
    CHECK(parse_program("Push 5\nOutput") == Program{{Op::Push, 5}, {Op::Output, 0}});
    CHECK(parse_program("Bnz -3 ; back-edge") == Program{{Op::Bnz, -3}});
    CHECK(parse_program("") == Program{});
    CHECK(parse_program("  ; only a comment\n\n  Pop  \n") == Program{{Op::Pop, 0}});
    CHECK(parse_program("SysCall 0\nPushCachePtr\nUnpack\nPack") ==
          Program{{Op::SysCall, 0}, {Op::PushCachePtr, 0}, {Op::Unpack, 0}, {Op::Pack, 0}});
}

TEST_CASE("parse_program rejects malformed lines with their line number") {
    auto line_of = [](const char* text) -> std::size_t {
        try {
            parse_program(text);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    CHECK(line_of("Push 1\nFrob") == 2);
    CHECK(line_of("Push") == 1);
    CHECK(line_of("Push x") == 1);
    CHECK(line_of("Push +3") == 1);
    CHECK(line_of("Add 3") == 1);
    CHECK(line_of("Dup -1") == 1);
    CHECK(line_of("Push 1 2") == 1);
    CHECK(line_of("Push 99999999999999999999") == 1);
}

TEST_CASE("format_program round-trips") {
    CHECK(format_program({{Op::Push, 5}}) == "Push 5");
    CHECK(format_program({}) == "");
    CHECK(format_program({{Op::SysCall, 0}}) == "SysCall 0");
    const std::string src = "Push 1 ; one\nDup 0\nBnz -2\nSwap 1\nAlloc ; frame\nRet";
    CHECK(format_program(parse_program(src)) == "Push 1\nDup 0\nBnz -2\nSwap 1\nAlloc\nRet");
    for (int i = 0; i < kOpCount; ++i) {
        Op op = static_cast<Op>(i);
        Instr ins{op, has_immediate(op) ? 3 : 0};
        CHECK(parse_program(format_instr(ins)) == Program{ins});
    }
}

TEST_CASE("opcode table") {
    CHECK(rule_opcodes().size() == kRuleOpcodeCount);
    CHECK(opcode_of(Op::Add) == Opcode::Add);
    CHECK(opcode_of(Op::SysCall) == Opcode::SysCall);
    CHECK_FALSE(opcode_of(Op::Pack).has_value());
    CHECK(opcode_name(Opcode::GetOff) == "getoff");
    for (Opcode op : rule_opcodes()) CHECK(opcode_from_name(opcode_name(op)) == op);
    CHECK_FALSE(opcode_from_name("frob").has_value());
}

using M = Memory<TwoPoint, TwoPoint>;
using A = Atom<TwoPoint, TwoPoint>;

A iat(std::int64_t n, TwoPoint l = TwoPoint::bot()) { return {Value<TwoPoint>::integer(n), l}; }

TEST_CASE("allocation is sequential per region") {
    M m;
    const auto bot = TwoPoint::bot(), top = TwoPoint::top();
    auto f0 = m.alloc(bot, 2, iat(0));
    CHECK(f0 == FrameId<TwoPoint>{bot, 0});
    REQUIRE(m.frame(f0) != nullptr);
    CHECK(*m.frame(f0) == std::vector<A>{iat(0), iat(0)});
    CHECK(m.alloc(bot, 1, iat(0)).seq == 1);
    CHECK(m.alloc(top, 1, iat(0)).seq == 0);
    CHECK(m.frame_count(bot) == 2);
    CHECK(m.alloc(bot, 0, iat(0)).seq == 2);
}

TEST_CASE("load and store") {
    M m;
    const auto bot = TwoPoint::bot();
    auto f = m.alloc(bot, 2, iat(0));
    A out;
    CHECK(m.load({f, 0}, out) == MemError::None);
    CHECK(out == iat(0));
    CHECK(m.load({f, 5}, out) == MemError::OutOfRange);
    CHECK(m.load({f, -1}, out) == MemError::OutOfRange);
    CHECK(m.load({{TwoPoint::top(), 0}, 0}, out) == MemError::UnknownFrame);
    CHECK(m.store({f, 1}, iat(9, TwoPoint::top())) == MemError::None);
    CHECK(m.load({f, 1}, out) == MemError::None);
    CHECK(out == iat(9, TwoPoint::top()));
    CHECK(m.load({f, 0}, out) == MemError::None);
    CHECK(out == iat(0));
    CHECK(m.store({f, 2}, iat(1)) == MemError::OutOfRange);
}

TEST_CASE("copies do not share stores") {
    M a;
    auto f = a.alloc(TwoPoint::bot(), 1, iat(0));
    M b = a;
    CHECK(b.store({f, 0}, iat(5)) == MemError::None);
    A out;
    a.load({f, 0}, out);
    CHECK(out == iat(0));
    b.load({f, 0}, out);
    CHECK(out == iat(5));
    CHECK_FALSE(a == b);
}

TEST_CASE("status rendering") {
    CHECK(to_string(Status::clean_stop()) == "CleanStop");
    CHECK(to_string(Status::exhausted()) == "Exhausted");
    CHECK(to_string(Status::halted(HaltReason::IfcViolation)) == "Halted(IfcViolation)");
}
