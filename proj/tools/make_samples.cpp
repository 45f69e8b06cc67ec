// Writes the 36-site demonstration inputs: board Touchstone model,
// capacitor models, target curve, capacitor list and run configurations.

#include <CLI11.hpp>

#include "capopt/capopt.hpp"

namespace fs = std::filesystem;
using namespace capopt;

int main(int argc, char** argv) {
    CLI::App app{"Generate the demonstration board and its input files"};
    std::string dir = "samples/demo36";
    bool board_only = false;
    app.add_option("dir", dir, "Output directory");
    app.add_flag("--board-only", board_only, "Only write the board model");
    CLI11_PARSE(app, argc, argv);

    try {
        const DemoSetup s = demo36_setup();
        fs::create_directories(dir);
        const fs::path out(dir);
        const NetworkModel board = board_to_network(s.board.board, s.grid);
        const std::string board_name = "board.s" + std::to_string(board.ports()) + "p";
        write_touchstone_file(out / board_name, board, DataFormat::RI, FrequencyUnit::Hz);
        std::cout << "wrote " << (out / board_name).string() << '\n';
        if (board_only) return 0;

        fs::create_directories(out / "caps");
        std::string list = "# candidate capacitor models\n";
        for (const auto& c : s.catalog) {
            const auto fixture = shunt_to_two_port(capacitor_element(c, s.grid), 50.0);
            write_touchstone_file(out / "caps" / (c.name + ".s2p"), fixture, DataFormat::RI, FrequencyUnit::Hz);
            list += "caps/" + c.name + ".s2p\n";
        }
        write_text_file(out / "capacitors.txt", list);

        std::string target = "# frequency_hz impedance_ohms\n";
        for (const auto& [f, z] : s.target.points()) target += format_exact(f) + ' ' + format_exact(z) + '\n';
        write_text_file(out / "target.txt", target);

        std::string obs;
        for (const auto& p : s.board.die_ports) obs += (obs.empty() ? "" : " ") + p;
        auto config = [&](const std::string& weights, const std::string& outdir) {
            return "[model]\n"
                   "touchstone = " + board_name + "\n"
                   "observation = " + obs + "\n"
                   "regulator_port = " + s.board.vr_port + "\n"
                   "regulator_r = " + format_exact(s.vr.r) + "\n"
                   "regulator_l = " + format_exact(s.vr.l) + "\n"
                   "die_r = " + format_exact(s.die.r) + "\n"
                   "die_c = " + format_exact(s.die.c) + "\n"
                   "\n[target]\nfile = target.txt\n"
                   "\n[capacitors]\nlist = capacitors.txt\n"
                   "\n[weights]\n" + weights +
                   "\n[ga]\nseed = 1\n"
                   "\n[transient]\nrise_time = 1e-08\n"
                   "\n[output]\ndir = " + outdir + "\n";
        };
        write_text_file(out / "transient.ini", config("transient = 1\n", "out_transient"));
        write_text_file(out / "area.ini", config("area_above = 1\n", "out_area"));
        std::cout << "wrote capacitor models, target and configurations to " << out.string() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
