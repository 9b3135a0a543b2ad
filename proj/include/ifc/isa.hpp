#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ifc {

enum class Priv : std::uint8_t { User, Kernel };

std::string to_string(Priv p);

template <class Region>
struct FrameId {
    Region region{};
    std::uint64_t seq = 0;
    auto operator<=>(const FrameId&) const = default;
};

template <class Region>
struct Pointer {
    FrameId<Region> frame;
    std::int64_t offset = 0;
    auto operator<=>(const Pointer&) const = default;
};

template <class Region>
class Value {
public:
    Value() = default;

    static Value integer(std::int64_t n) { return Value(n); }
    static Value pointer(FrameId<Region> f, std::int64_t off) {
        return Value(Pointer<Region>{std::move(f), off});
    }

    bool is_int() const { return std::holds_alternative<std::int64_t>(v_); }
    bool is_ptr() const { return !is_int(); }
    std::int64_t as_int() const { return std::get<std::int64_t>(v_); }
    const Pointer<Region>& as_ptr() const { return std::get<Pointer<Region>>(v_); }

    auto operator<=>(const Value&) const = default;

private:
    explicit Value(std::int64_t n) : v_(n) {}
    explicit Value(Pointer<Region> p) : v_(std::move(p)) {}

    std::variant<std::int64_t, Pointer<Region>> v_{std::int64_t{0}};
};

template <class Region, class Mark>
struct Atom {
    Value<Region> value;
    Mark mark{};
    auto operator<=>(const Atom&) const = default;
};

template <class Region, class Mark>
struct RetFrame {
    Atom<Region, Mark> pc;
    Priv priv = Priv::User;
    auto operator<=>(const RetFrame&) const = default;
};

template <class Region, class Mark>
using StackElt = std::variant<Atom<Region, Mark>, RetFrame<Region, Mark>>;

// Bottom of the stack is front(), top is back().
template <class Region, class Mark>
using Stack = std::vector<StackElt<Region, Mark>>;

enum class MemError : std::uint8_t { None, OutOfRange, UnknownFrame };

template <class Region, class Mark>
class Memory {
public:
    using AtomT = Atom<Region, Mark>;
    using Frame = std::vector<AtomT>;
    using FramePtr = std::shared_ptr<Frame>;

    FrameId<Region> alloc(const Region& region, std::size_t size, const AtomT& def) {
        auto& frames = regions_[region];
        FrameId<Region> id{region, frames.size()};
        frames.push_back(std::make_shared<Frame>(size, def));
        return id;
    }

    const Frame* frame(const FrameId<Region>& id) const {
        auto it = regions_.find(id.region);
        if (it == regions_.end() || id.seq >= it->second.size()) return nullptr;
        return it->second[id.seq].get();
    }

    MemError load(const Pointer<Region>& p, AtomT& out) const {
        const Frame* f = frame(p.frame);
        if (!f) return MemError::UnknownFrame;
        if (p.offset < 0 || static_cast<std::uint64_t>(p.offset) >= f->size())
            return MemError::OutOfRange;
        out = (*f)[static_cast<std::size_t>(p.offset)];
        return MemError::None;
    }

    MemError store(const Pointer<Region>& p, const AtomT& a) {
        auto it = regions_.find(p.frame.region);
        if (it == regions_.end() || p.frame.seq >= it->second.size())
            return MemError::UnknownFrame;
        FramePtr& slot = it->second[p.frame.seq];
        if (p.offset < 0 || static_cast<std::uint64_t>(p.offset) >= slot->size())
            return MemError::OutOfRange;
        // Frames may be shared with copies of this memory (snapshots, forked
        // states), so only an unshared frame is written in place.
        if (slot.use_count() == 1) {
            (*slot)[static_cast<std::size_t>(p.offset)] = a;
        } else {
            auto copy = std::make_shared<Frame>(*slot);
            (*copy)[static_cast<std::size_t>(p.offset)] = a;
            slot = std::move(copy);
        }
        return MemError::None;
    }

    std::size_t frame_count(const Region& region) const {
        auto it = regions_.find(region);
        return it == regions_.end() ? 0 : it->second.size();
    }

    const std::map<Region, std::vector<FramePtr>>& regions() const { return regions_; }

    // Copy holding only the given region.
    Memory restricted(const Region& region) const {
        Memory m;
        if (auto it = regions_.find(region); it != regions_.end()) m.regions_.emplace(*it);
        return m;
    }

    friend bool operator==(const Memory& a, const Memory& b) {
        if (a.regions_.size() != b.regions_.size()) return false;
        for (auto ia = a.regions_.begin(), ib = b.regions_.begin(); ia != a.regions_.end();
             ++ia, ++ib) {
            if (!(ia->first == ib->first) || ia->second.size() != ib->second.size()) return false;
            for (std::size_t i = 0; i < ia->second.size(); ++i)
                if (ia->second[i] != ib->second[i] && *ia->second[i] != *ib->second[i])
                    return false;
        }
        return true;
    }

private:
    std::map<Region, std::vector<FramePtr>> regions_;
};

enum class Op : std::uint8_t {
    Add, Sub, Push, Pop, Load, Store, Jump, Bnz, Call, Ret, Output,
    Dup, Swap, Alloc, SizeOf, GetOff, Eq, SysCall, PushCachePtr, Unpack, Pack,
};

inline constexpr int kOpCount = 21;

struct Instr {
    Op op = Op::Push;
    std::int64_t imm = 0;
    bool operator==(const Instr&) const = default;
};

using Program = std::vector<Instr>;

std::string_view mnemonic(Op op);
std::optional<Op> op_from_mnemonic(std::string_view s);
bool has_immediate(Op op);

std::string format_instr(const Instr& i);

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& msg);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

Program parse_program(std::string_view text);
std::string format_program(const Program& p);

// Opcode codes as stored in the rule cache and used to key rule tables.
enum class Opcode : std::int64_t {
    Add = 0, Output = 1, Push = 2, Load = 3, Store = 4, Jump = 5, Bnz = 6, Call = 7,
    Ret = 8, Sub = 9, Pop = 10, Dup = 11, Swap = 12, Alloc = 13, SizeOf = 14,
    GetOff = 15, Eq = 16, SysCall = 17,
};

// Opcodes governed by rule tables (everything except SysCall).
inline constexpr int kRuleOpcodeCount = 17;

std::optional<Opcode> opcode_of(Op op);
std::string_view opcode_name(Opcode op);
std::optional<Opcode> opcode_from_name(std::string_view s);
std::vector<Opcode> rule_opcodes();

inline std::int64_t code(Opcode op) { return static_cast<std::int64_t>(op); }

// Upper bound on frame sizes; larger Alloc requests halt the machine.
inline constexpr std::int64_t kMaxFrameSize = 1 << 16;

// Halting reasons shared by all machines.
enum class HaltReason : std::uint8_t {
    IfcViolation,
    BadOperand,
    StackUnderflow,
    OutOfRange,
    UnknownFrame,
    BadPc,
    NoReturnFrame,
    UnknownSyscall,
    SyscallFailed,
    OutputPointer,
    Overflow,
    AllocTooLarge,
    MissingInput,
    PrivilegeViolation,
    KernelOutput,
    KernelFault,
    KernelBudget,
    KernelPointer,
};

std::string_view to_string(HaltReason r);

struct Status {
    enum class Kind : std::uint8_t { Exhausted, CleanStop, Halted };
    Kind kind = Kind::Exhausted;
    HaltReason reason = HaltReason::BadPc;

    static Status exhausted() { return {Kind::Exhausted, HaltReason::BadPc}; }
    static Status clean_stop() { return {Kind::CleanStop, HaltReason::BadPc}; }
    static Status halted(HaltReason r) { return {Kind::Halted, r}; }

    bool terminated() const { return kind != Kind::Exhausted; }
    friend bool operator==(const Status& a, const Status& b) {
        return a.kind == b.kind && (a.kind != Kind::Halted || a.reason == b.reason);
    }
};

std::string to_string(const Status& s);

inline HaltReason halt_reason(MemError e) {
    return e == MemError::OutOfRange ? HaltReason::OutOfRange : HaltReason::UnknownFrame;
}

template <class Region>
std::string value_to_string(const Value<Region>& v) {
    if (v.is_int()) return std::to_string(v.as_int());
    const auto& p = v.as_ptr();
    using std::to_string;
    using ifc::to_string;
    return "ptr(" + to_string(p.frame.region) + "#" + std::to_string(p.frame.seq) + "+" +
           std::to_string(p.offset) + ")";
}

// Result of a single step: either the machine stepped (stop empty) or it
// could not step, in which case state is the unchanged input state.
template <class State, class Event>
struct StepResult {
    State state;
    std::optional<Event> event;
    std::optional<Status> stop;

    bool stepped() const { return !stop.has_value(); }
};

}  // namespace ifc
