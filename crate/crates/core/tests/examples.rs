// Every example except the training run, which the acceptance suite covers.

#[path = "../examples/capsules.rs"]
mod capsules;
#[path = "../examples/decompose.rs"]
mod decompose;
#[path = "../examples/filter_bank.rs"]
mod filter_bank;
#[path = "../examples/gcnn.rs"]
mod gcnn;
#[path = "../examples/grad_check.rs"]
mod grad_check;
#[path = "../examples/homs.rs"]
mod homs;
#[path = "../examples/induction.rs"]
mod induction;
#[path = "../examples/irreps.rs"]
mod irreps;
#[path = "../examples/verify_net.rs"]
mod verify_net;

#[test]
fn examples_run() {
    capsules::run_example().unwrap();
    decompose::run_example().unwrap();
    filter_bank::run_example().unwrap();
    gcnn::run_example().unwrap();
    grad_check::run_example().unwrap();
    homs::run_example().unwrap();
    induction::run_example().unwrap();
    irreps::run_example().unwrap();
    verify_net::run_example().unwrap();
}
