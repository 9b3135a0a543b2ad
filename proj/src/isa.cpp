#include "ifc/isa.hpp"

#include <array>
#include <charconv>
#include <iterator>

namespace ifc {

namespace {

constexpr std::array<std::string_view, kOpCount> kMnemonics = {
    "Add", "Sub", "Push", "Pop", "Load", "Store", "Jump", "Bnz", "Call", "Ret", "Output",
    "Dup", "Swap", "Alloc", "SizeOf", "GetOff", "Eq", "SysCall", "PushCachePtr", "Unpack",
    "Pack",
};

constexpr std::array<std::string_view, 18> kOpcodeNames = {
    "add", "output", "push", "load", "store", "jump", "bnz", "call", "ret",
    "sub", "pop", "dup", "swap", "alloc", "sizeof", "getoff", "eq", "syscall",
};

std::string_view trim(std::string_view s) {
    const char* ws = " \t\r";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

}  // namespace

std::string to_string(Priv p) { return p == Priv::User ? "user" : "kernel"; }

std::string_view mnemonic(Op op) { return kMnemonics[static_cast<std::size_t>(op)]; }

std::optional<Op> op_from_mnemonic(std::string_view s) {
    for (std::size_t i = 0; i < kMnemonics.size(); ++i)
        if (kMnemonics[i] == s) return static_cast<Op>(i);
    return std::nullopt;
}

bool has_immediate(Op op) {
    return op == Op::Push || op == Op::Bnz || op == Op::Dup || op == Op::Swap ||
           op == Op::SysCall;
}

std::string format_instr(const Instr& i) {
    std::string s(mnemonic(i.op));
    if (has_immediate(i.op)) s += " " + std::to_string(i.imm);
    return s;
}

ParseError::ParseError(std::size_t line, const std::string& msg)
    : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}

Program parse_program(std::string_view text) {
    Program prog;
    std::size_t lineno = 0;
    while (!text.empty()) {
        ++lineno;
        auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (auto c = line.find(';'); c != std::string_view::npos) line = line.substr(0, c);
        line = trim(line);
        if (line.empty()) continue;

        auto sp = line.find_first_of(" \t");
        std::string_view mn = line.substr(0, sp);
        std::string_view rest = sp == std::string_view::npos ? std::string_view{}
                                                             : trim(line.substr(sp));
        auto op = op_from_mnemonic(mn);
        if (!op) throw ParseError(lineno, "unknown mnemonic '" + std::string(mn) + "'");

        Instr ins{*op, 0};
        if (has_immediate(*op)) {
            if (rest.empty())
                throw ParseError(lineno, std::string(mn) + " expects an immediate");
            std::string_view digits = rest;
            if (!digits.empty() && digits.front() == '+')
                throw ParseError(lineno, "malformed immediate '" + std::string(rest) + "'");
            auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), ins.imm);
            if (ec != std::errc{} || ptr != digits.data() + digits.size())
                throw ParseError(lineno, "malformed immediate '" + std::string(rest) + "'");
            if ((*op == Op::Dup || *op == Op::Swap) && ins.imm < 0)
                throw ParseError(lineno, std::string(mn) + " index must be non-negative");
        } else if (!rest.empty()) {
            throw ParseError(lineno, std::string(mn) + " takes no immediate");
        }
        prog.push_back(ins);
    }
    return prog;
}

std::string format_program(const Program& p) {
    std::string out;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i) out += '\n';
        out += format_instr(p[i]);
    }
    return out;
}

std::optional<Opcode> opcode_of(Op op) {
    switch (op) {
        case Op::Add: return Opcode::Add;
        case Op::Sub: return Opcode::Sub;
        case Op::Push: return Opcode::Push;
        case Op::Pop: return Opcode::Pop;
        case Op::Load: return Opcode::Load;
        case Op::Store: return Opcode::Store;
        case Op::Jump: return Opcode::Jump;
        case Op::Bnz: return Opcode::Bnz;
        case Op::Call: return Opcode::Call;
        case Op::Ret: return Opcode::Ret;
        case Op::Output: return Opcode::Output;
        case Op::Dup: return Opcode::Dup;
        case Op::Swap: return Opcode::Swap;
        case Op::Alloc: return Opcode::Alloc;
        case Op::SizeOf: return Opcode::SizeOf;
        case Op::GetOff: return Opcode::GetOff;
        case Op::Eq: return Opcode::Eq;
        case Op::SysCall: return Opcode::SysCall;
        case Op::PushCachePtr:
        case Op::Unpack:
        case Op::Pack: return std::nullopt;
    }
    return std::nullopt;
}

std::string_view opcode_name(Opcode op) { return kOpcodeNames[static_cast<std::size_t>(op)]; }

std::optional<Opcode> opcode_from_name(std::string_view s) {
    for (std::size_t i = 0; i < kOpcodeNames.size(); ++i)
        if (kOpcodeNames[i] == s) return static_cast<Opcode>(i);
    return std::nullopt;
}

std::vector<Opcode> rule_opcodes() {
    std::vector<Opcode> ops;
    for (int i = 0; i < kRuleOpcodeCount; ++i) ops.push_back(static_cast<Opcode>(i));
    return ops;
}

std::string_view to_string(HaltReason r) {
    switch (r) {
        case HaltReason::IfcViolation: return "IfcViolation";
        case HaltReason::BadOperand: return "BadOperand";
        case HaltReason::StackUnderflow: return "StackUnderflow";
        case HaltReason::OutOfRange: return "OutOfRange";
        case HaltReason::UnknownFrame: return "UnknownFrame";
        case HaltReason::BadPc: return "BadPc";
        case HaltReason::NoReturnFrame: return "NoReturnFrame";
        case HaltReason::UnknownSyscall: return "UnknownSyscall";
        case HaltReason::SyscallFailed: return "SyscallFailed";
        case HaltReason::OutputPointer: return "OutputPointer";
        case HaltReason::Overflow: return "Overflow";
        case HaltReason::AllocTooLarge: return "AllocTooLarge";
        case HaltReason::MissingInput: return "MissingInput";
        case HaltReason::PrivilegeViolation: return "PrivilegeViolation";
        case HaltReason::KernelOutput: return "KernelOutput";
        case HaltReason::KernelFault: return "KernelFault";
        case HaltReason::KernelBudget: return "KernelBudget";
        case HaltReason::KernelPointer: return "KernelPointer";
    }
    return "?";
}

std::string to_string(const Status& s) {
    switch (s.kind) {
        case Status::Kind::Exhausted: return "Exhausted";
        case Status::Kind::CleanStop: return "CleanStop";
        case Status::Kind::Halted: return "Halted(" + std::string(to_string(s.reason)) + ")";
    }
    return "?";
}

}  // namespace ifc
