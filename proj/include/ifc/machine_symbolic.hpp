#pragma once

#include "ifc/machine_abstract.hpp"
#include "ifc/rule_dsl.hpp"

namespace ifc {

template <Lattice L>
struct TableRules {
    const RuleTable* table;

    Decision<L> operator()(Opcode op, const RVec<L>& rv) const {
        auto res = apply_table(*table, op, rv);
        if (!res) return {HaltReason::IfcViolation, {}, {}};
        return {std::nullopt, std::move(res->rpc), std::move(res->r)};
    }
};

template <Lattice L>
AStep<L> step_symbolic(const RuleTable& t, AState<L> s) {
    return step_with(TableRules<L>{&t}, std::move(s));
}

template <Lattice L>
RunResult<L> run_symbolic(const RuleTable& t, AState<L> s, std::size_t fuel) {
    return run_with(TableRules<L>{&t}, std::move(s), fuel);
}

}  // namespace ifc
