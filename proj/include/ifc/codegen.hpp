#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ifc/isa.hpp"
#include "ifc/lattice.hpp"
#include "ifc/machine_concrete.hpp"
#include "ifc/rule_dsl.hpp"

namespace ifc {

using CodeSeq = std::vector<Instr>;

CodeSeq operator+(CodeSeq a, const CodeSeq& b);

// Leaf generators. Booleans are the integers 0 and 1.
CodeSeq gen_true();
CodeSeq gen_false();
CodeSeq gen_pop();
CodeSeq gen_and();
CodeSeq gen_or();
CodeSeq gen_not();
CodeSeq gen_impl();
CodeSeq gen_some(const CodeSeq& c);
CodeSeq gen_none();
CodeSeq gen_equal();
CodeSeq gen_load_from(std::int64_t addr);  // cache cell addr
CodeSeq gen_store_at(std::int64_t addr);
CodeSeq gen_dup(std::int64_t i = 0);
CodeSeq gen_swap(std::int64_t i = 1);

CodeSeq gen_skip_if(std::int64_t n);
CodeSeq gen_skip(std::int64_t n);
CodeSeq gen_if(const CodeSeq& t, const CodeSeq& f);
CodeSeq gen_indexed_cases(const CodeSeq& dflt,
                          const std::function<CodeSeq(std::int64_t)>& guard,
                          const std::function<CodeSeq(std::int64_t)>& body,
                          const std::vector<std::int64_t>& indices);
CodeSeq gen_loop(const CodeSeq& c);
CodeSeq gen_for(const CodeSeq& body);

// Kernel code for the lattice operations on tags. On a stack [t1, t2, ...]
// with t1 on top, join leaves t1 join t2 and flows leaves (t1 flows t2).
struct LatticeCode {
    CodeSeq bot;
    CodeSeq join;
    CodeSeq flows;
};

template <Lattice L>
struct ConcreteLattice {
    std::string name;
    LatticeCode code;
    std::function<Tag(const L&, CMemory&)> encode;
    std::function<std::optional<L>(const Tag&, const CMemory&)> decode;
};

ConcreteLattice<TwoPoint> two_point_clattice();
ConcreteLattice<PrinSet> prinset_clattice();

CodeSeq gen_elab(const LExpr& e, const LatticeCode& lc);
CodeSeq gen_bool(const BExpr& b, const LatticeCode& lc);
CodeSeq gen_match_op(Opcode op);
CodeSeq gen_apply_rule(const SymRule& r, const LatticeCode& lc);
CodeSeq gen_compute_results(const RuleTable& t, const LatticeCode& lc);
CodeSeq gen_store_results();
Program gen_fault_handler(const RuleTable& t, const LatticeCode& lc);

// joinP kernel routine for the principal-set encoding. Entered by SysCall
// with the stack [q, v, ret-frame, ...].
CodeSeq gen_syscall_joinp(const LatticeCode& lc);

// Handler followed by the system-call routines (joinP when requested).
KernelImage build_kernel(const RuleTable& t, const LatticeCode& lc, bool with_joinp);

}  // namespace ifc
