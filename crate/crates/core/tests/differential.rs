mod support;

use proptest::prelude::*;
use sleepscan::symexec::run_straight_line;
use support::oracle::{arb_program, assemble, interpret, to_u256, Op};

fn engine_stack(ops: &[Op]) -> Result<Vec<sleepscan::U256>, String> {
    let (instrs, _) = assemble(ops);
    let stack = run_straight_line(&instrs).ok_or("halted abnormally")?;
    stack.iter().map(|v| v.eval_concrete().ok_or_else(|| format!("symbolic result {v}"))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn engine_matches_reference_interpreter(ops in arb_program()) {
        let expected: Vec<_> = interpret(&ops).iter().map(to_u256).collect();
        prop_assert_eq!(engine_stack(&ops), Ok(expected), "{:?}", ops);
    }
}

#[test]
fn hand_picked_programs() {
    use Op::*;
    let cases: Vec<Vec<Op>> = vec![
        // 7 / -2 signed, and the single overflowing signed division
        vec![Push(vec![0xff; 32]), Push(vec![0xfe]), Arith(0x19), Push(vec![7]), Arith(0x05)],
        vec![Push(vec![0xff; 32]), Push([vec![0x80], vec![0; 31]].concat()), Arith(0x05)],
        vec![Push(vec![0xff]), Push(vec![0]), Arith(0x0b)],
        vec![Push(vec![0x80, 0]), Push(vec![4]), Arith(0x1d)],
        vec![Push(vec![0x12, 0x34]), MStore(3), MLoad(0), MLoad(5), Sha3(0, 37)],
        vec![Push(vec![0xab]), MStore8(31), MLoad(0), Push(vec![2]), Push(vec![3]), Push(vec![5]), Arith(0x08)],
    ];
    for ops in cases {
        let expected: Vec<_> = interpret(&ops).iter().map(to_u256).collect();
        assert_eq!(engine_stack(&ops), Ok(expected), "{ops:?}");
    }
}
