#pragma once

#include <optional>
#include <vector>

#include "ifc/codegen.hpp"
#include "ifc/machine_concrete.hpp"

namespace ifc::testing {

struct Fragment {
    CState state;
    std::optional<Status> stop;  // empty when execution fell off the end
    std::size_t steps = 0;
};

// Runs kernel code on the given stack (top last) and memory until control
// leaves the fragment.
inline Fragment run_fragment(const CodeSeq& code, CStack stack,
                             CMemory mem = new_kernel_memory(), std::size_t budget = 100000) {
    CState s;
    s.priv = Priv::Kernel;
    s.uimem = std::make_shared<const Program>();
    s.kimem = std::make_shared<const Program>(code);
    s.mem = std::move(mem);
    s.stack = std::move(stack);
    s.pc = katom(0);
    Fragment f;
    for (; f.steps < budget; ++f.steps) {
        if (s.pc.value.is_int() && s.pc.value.as_int() == static_cast<std::int64_t>(code.size()))
            break;
        auto r = step_concrete(std::move(s));
        s = std::move(r.state);
        if (r.stop) {
            f.stop = r.stop;
            break;
        }
    }
    f.state = std::move(s);
    return f;
}

inline CStack kstack(std::initializer_list<std::int64_t> top_first) {
    CStack st;
    std::vector<std::int64_t> v(top_first);
    for (auto it = v.rbegin(); it != v.rend(); ++it) st.emplace_back(katom(*it));
    return st;
}

inline std::vector<Tag> values(const CStack& st) {
    std::vector<Tag> out;  // top first
    for (auto it = st.rbegin(); it != st.rend(); ++it)
        if (const auto* a = std::get_if<CAtom>(&*it)) out.push_back(a->value);
    return out;
}

inline std::int64_t top_int(const Fragment& f) {
    return std::get<CAtom>(f.state.stack.back()).value.as_int();
}

// Kernel memory whose cache input line holds the given cells.
inline CMemory cache_with(const std::array<Tag, 5>& line) {
    CMemory m = new_kernel_memory();
    for (std::size_t i = 0; i < line.size(); ++i)
        m.store({kCacheFrame, static_cast<std::int64_t>(i)}, katom(line[i]));
    return m;
}

}  // namespace ifc::testing
