/* Build: cargo build -p medchain-ffi --release
 *        cc crates/ffi/examples/chain.c -Icrates/ffi/include \
 *           target/release/libmedchain_ffi.a -lpthread -ldl -lm -o chain */
#include <stdio.h>
#include "medchain.h"

int main(void) {
    MedchainScenario *sc = NULL;
    if (medchain_scenario_load("fig7_manila_guam", &sc) != MEDCHAIN_STATUS_OK) {
        fprintf(stderr, "load: %s\n", medchain_last_error_message());
        return 1;
    }
    char *plan = NULL;
    MedchainStatus st = medchain_chain_search(sc, 14.5995, 120.9842, 13.4443, 144.7937,
                                              0.0, 172800.0, 600.0, &plan);
    if (st == MEDCHAIN_STATUS_OK) {
        printf("%s\n", plan);
        medchain_string_free(plan);
    } else {
        fprintf(stderr, "chain (%d): %s\n", (int)st, medchain_last_error_message());
    }
    medchain_scenario_free(sc);
    return st == MEDCHAIN_STATUS_OK ? 0 : 2;
}
