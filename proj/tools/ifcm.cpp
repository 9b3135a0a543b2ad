// ifcm: run programs on the IFC machines, dump the generated fault handler,
// and run the verification campaigns.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ifc/verify.hpp"

using namespace ifc;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Config {
    std::string machine;
    std::string lattice;
    std::string table;
    std::size_t fuel = 1000;
    std::size_t iters = 10000;
    std::uint64_t seed = 1;
    std::string observer;
    bool raw_tags = false;
    bool joinp = false;
    std::size_t mem = 0;
    std::string label;
    std::vector<std::string> args;
    std::string program_path;
    std::string campaign;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RuleTable load_table(const std::string& spec) {
    if (spec == "rabs") return rabs();
    try {
        return parse_table(slurp(spec));
    } catch (const TableError& e) {
        throw UsageError(std::string("bad table: ") + e.what());
    }
}

template <Lattice L>
L parse_label(const std::string& s, const char* what) {
    if (s.empty()) return L::bot();
    auto l = L::parse(s);
    if (!l) throw UsageError(std::string("bad ") + what + " label: " + s);
    return *l;
}

// <int>@<label> or &<offset>@<label>, the latter pointing into the initial frame.
template <Lattice L>
AAtom<L> parse_arg(const std::string& s, const MachineInput<L>& in) {
    auto at = s.find('@');
    if (at == std::string::npos) throw UsageError("argument needs @label: " + s);
    std::string v = s.substr(0, at);
    L l = parse_label<L>(s.substr(at + 1), "argument");
    const bool ptr = !v.empty() && v[0] == '&';
    if (ptr) v = v.substr(1);
    std::int64_t n = 0;
    std::size_t used = 0;
    try {
        n = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw UsageError("bad argument value: " + s);
    if (ptr) return {Value<L>::pointer(FrameId<L>{in.label, 0}, n), std::move(l)};
    return int_atom<L>(n, std::move(l));
}

template <Lattice L>
int cmd_run(const Config& c) {
    MachineInput<L> in;
    try {
        in.program = parse_program(slurp(c.program_path));
    } catch (const ParseError& e) {
        throw UsageError(std::string("parse error: ") + e.what());
    }
    in.mem_size = c.mem;
    in.label = parse_label<L>(c.label, "memory");
    for (const auto& a : c.args) in.args.push_back(parse_arg<L>(a, in));

    MachineConfig<L> mc;
    if (c.machine == "abstract")
        mc = abstract_config<L>(c.joinp);
    else if (c.machine == "symbolic")
        mc = symbolic_config<L>(load_table(c.table), c.joinp);
    else
        mc = concrete_config<L>(load_table(c.table), c.joinp);

    auto r = run_layer(mc, in, c.fuel, c.raw_tags);
    if (c.raw_tags && mc.layer == Layer::Concrete) {
        for (const auto& e : r.raw)
            std::cout << "OUT " << value_to_string(e.atom.value) << " @ " << render_tag(e.atom.mark)
                      << "\n";
    } else {
        for (const auto& e : r.trace) std::cout << render_event(e) << "\n";
        if (r.error) std::cout << "ERROR " << *r.error << "\n";
    }
    std::cout << "STATUS " << to_string(r.status) << "\n";
    return 0;
}

template <Lattice L>
int cmd_gen_handler(const Config& c) {
    RuleTable t = load_table(c.table);
    auto cl = default_clattice<L>();
    std::cout << "; fault handler\n; table: " << c.table << "\n; lattice: " << cl->name << "\n"
              << format_program(gen_fault_handler(t, cl->code)) << "\n";
    return 0;
}

template <Lattice L>
int cmd_test(const Config& c) {
    CampaignOptions<L> opt;
    opt.iters = c.iters;
    opt.fuel = c.fuel;
    opt.seed = c.seed;
    opt.observer = parse_label<L>(c.observer, "observer");
    const bool joinp = c.joinp && std::is_same_v<L, PrinSet>;
    const std::string machine = c.machine.empty() ? "abstract" : c.machine;
    TestReport rep;

    auto machine_config = [&](const std::string& m) {
        if (m == "abstract") return abstract_config<L>(joinp);
        if (m == "symbolic") return symbolic_config<L>(load_table(c.table), joinp);
        return concrete_config<L>(load_table(c.table), joinp);
    };

    if (c.campaign == "tini") {
        rep = check_tini(machine_config(machine), opt);
    } else if (c.campaign == "refinement") {
        // Compares the chosen machine with the one above it.
        const std::string m = c.machine.empty() ? "concrete" : c.machine;
        if (m == "abstract") throw UsageError("refinement needs --machine symbolic or concrete");
        auto upper = machine_config(m == "symbolic" ? "abstract" : "symbolic");
        rep = check_refinement(upper, machine_config(m), opt);
    } else if (c.campaign == "handler-oracle") {
        RuleTable t = load_table(c.table);
        if constexpr (std::is_same_v<L, PrinSet>)
            rep = check_handler_oracle_set(t, std::max<std::size_t>(c.iters, 1), c.seed);
        else
            rep = check_handler_oracle_two(t);
    } else if (c.campaign == "unwinding") {
        if (machine == "concrete") throw UsageError("unwinding runs on abstract or symbolic");
        rep = check_unwinding(machine_config(machine), opt);
    } else {
        rep = check_mutants(opt);
    }
    std::cout << rep.to_json().dump(2) << "\n";
    return rep.passed ? 0 : 1;
}

template <class F>
int dispatch(const std::string& lattice, F&& f) {
    if (lattice == "set") return f(PrinSet{});
    return f(TwoPoint{});
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"IFC machines, fault-handler compiler and verification campaigns"};
    app.require_subcommand(1);
    Config c;
    const std::vector<std::string> machines{"abstract", "symbolic", "concrete"};
    const std::vector<std::string> lattices{"two", "set"};

    auto common = [&](CLI::App* sub) {
        sub->add_option("--lattice", c.lattice, "two or set")
            ->check(CLI::IsMember(lattices));
        sub->add_option("--table", c.table, "rule table JSON path, or rabs");
    };

    auto* run = app.add_subcommand("run", "run a program and print its trace");
    common(run);
    run->add_option("--machine", c.machine, "abstract, symbolic or concrete")
        ->check(CLI::IsMember(machines))
        ->default_str("abstract");
    run->add_option("--fuel", c.fuel, "user instructions to execute");
    run->add_option("--mem", c.mem, "size of the initial memory frame");
    run->add_option("--label", c.label, "label of the initial frame and pc");
    run->add_option("--arg", c.args, "stack argument <int>@<label> or &<offset>@<label>, top first");
    run->add_flag("--raw-tags", c.raw_tags, "print concrete tags uninterpreted");
    run->add_flag("--joinp", c.joinp, "provide the joinP system call (set lattice)");
    run->add_option("program", c.program_path, "assembly file")->required();

    auto* gen = app.add_subcommand("gen-handler", "print the compiled fault handler");
    common(gen);

    auto* test = app.add_subcommand("test", "run a verification campaign");
    common(test);
    test->add_option("campaign", c.campaign)
        ->required()
        ->check(CLI::IsMember({"tini", "refinement", "handler-oracle", "unwinding", "mutants"}));
    test->add_option("--machine", c.machine)->check(CLI::IsMember(machines));
    test->add_option("--fuel", c.fuel);
    test->add_option("--iters", c.iters);
    test->add_option("--seed", c.seed);
    test->add_option("--observer", c.observer, "observer label (default bot)");
    test->add_flag("--joinp", c.joinp, "generate joinP system calls (set lattice)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) {
            if (c.machine.empty()) c.machine = "abstract";
            if (c.machine != "abstract" && c.table.empty())
                throw UsageError("--machine " + c.machine + " needs --table");
            if (c.machine == "concrete" && c.lattice.empty())
                throw UsageError("--machine concrete needs --lattice");
            return dispatch(c.lattice, [&](auto l) { return cmd_run<decltype(l)>(c); });
        }
        if (gen->parsed()) {
            if (c.table.empty()) throw UsageError("gen-handler needs --table");
            return dispatch(c.lattice, [&](auto l) { return cmd_gen_handler<decltype(l)>(c); });
        }
        if (c.table.empty()) c.table = "rabs";
        return dispatch(c.lattice, [&](auto l) { return cmd_test<decltype(l)>(c); });
    } catch (const UsageError& e) {
        std::cerr << "ifcm: " << e.what() << "\n";
        return 2;
    }
}
