#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "ifc/isa.hpp"

namespace ifc {

using Tag = Value<Priv>;
using CAtom = Atom<Priv, Tag>;
using CStack = Stack<Priv, Tag>;
using CMemory = Memory<Priv, Tag>;
using CRetFrame = RetFrame<Priv, Tag>;

inline Tag default_tag() { return Tag::integer(-1); }
inline CAtom katom(Tag v) { return {std::move(v), default_tag()}; }
inline CAtom katom(std::int64_t n) { return katom(Tag::integer(n)); }

// The rule cache is the first kernel frame.
inline const FrameId<Priv> kCacheFrame{Priv::Kernel, 0};

struct CacheAddr {
    static constexpr std::int64_t op = 0;
    static constexpr std::int64_t tag_pc = 1;
    static constexpr std::int64_t tag1 = 2;
    static constexpr std::int64_t tag2 = 3;
    static constexpr std::int64_t tag3 = 4;
    static constexpr std::int64_t tag_rpc = 5;
    static constexpr std::int64_t tag_r = 6;
    static constexpr std::size_t size = 7;
};

struct SyscallEntry {
    std::size_t arity = 0;
    std::int64_t entry = 0;
};

using SyscallEntries = std::map<std::int64_t, SyscallEntry>;

struct KernelImage {
    Program code;
    SyscallEntries syscalls;
};

struct CState {
    Priv priv = Priv::User;
    std::shared_ptr<const Program> uimem;
    std::shared_ptr<const Program> kimem;
    CMemory mem;
    CStack stack;
    CAtom pc;
    std::shared_ptr<const SyscallEntries> syscalls;
};

struct CEvent {
    CAtom atom;
    CMemory kernel;  // kernel region at emission
};

using CStep = StepResult<CState, CEvent>;

// Kernel memory holding only the cache frame, all cells -1.
CMemory new_kernel_memory();

struct CInput {
    Program program;
    std::vector<CAtom> args;  // top of stack first
    std::size_t mem_size = 0;
    Tag tag;
    CMemory memory = new_kernel_memory();  // kernel frames referenced by tags
};

CState init_concrete(const CInput& in, const KernelImage& kernel);

std::array<Tag, 5> cache_input(const CMemory& mem);
std::array<Tag, 2> cache_output(const CMemory& mem);

CStep step_concrete(CState s);

struct CRunStats {
    std::size_t user_steps = 0;
    std::size_t kernel_steps = 0;
    std::size_t misses = 0;
    std::size_t longest_kernel_segment = 0;
};

struct CRunResult {
    std::vector<CEvent> trace;
    Status status;
    CState final;
    CRunStats stats;
};

inline constexpr std::size_t kTwoPointKernelBudget = 1000;
inline constexpr std::size_t kPrinSetKernelBudget = 100000;

// Fuel counts user instructions that retire; each kernel segment may take
// at most kernel_budget steps before the run halts with KernelBudget.
CRunResult run_concrete(CState s, std::size_t fuel, std::size_t kernel_budget);

struct KernelRun {
    CState state;
    std::optional<Status> stop;  // empty when control returned to user mode
    std::size_t steps = 0;
};

// Runs kernel code until the privilege bit flips back to user or the
// machine halts.
KernelRun run_kernel(CState s, std::size_t budget);

std::string render_tag(const Tag& t);

}  // namespace ifc
