#include "ifc/machine_abstract.hpp"

namespace ifc {

std::optional<AAtom<PrinSet>> joinp(const std::vector<AAtom<PrinSet>>& args) {
    if (args.size() != 2) return std::nullopt;
    const auto& q = args[0];
    const auto& v = args[1];
    if (!q.value.is_int() || q.value.as_int() < 0) return std::nullopt;
    return AAtom<PrinSet>{v.value, join(join(v.mark, q.mark), PrinSet{q.value.as_int()})};
}

Syscall<PrinSet> syscall_joinp() { return {2, joinp}; }

std::shared_ptr<const SyscallTable<PrinSet>> joinp_syscalls() {
    static const auto table =
        std::make_shared<const SyscallTable<PrinSet>>(SyscallTable<PrinSet>{{kJoinPId, syscall_joinp()}});
    return table;
}

}  // namespace ifc
