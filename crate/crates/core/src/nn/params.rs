/// A named view of one parameter tensor together with its gradient buffer.
#[derive(Debug)]
pub struct ParamBlock<'a> {
    pub name: String,
    pub value: &'a mut [f64],
    pub grad: &'a mut [f64],
}

/// Anything that owns trainable parameters.
///
/// Blocks are returned in declaration order. Optimizer state and checkpoint
/// layout both rely on that order being stable for a given architecture.
pub trait Parameterized {
    fn param_blocks(&mut self) -> Vec<ParamBlock<'_>>;

    fn zero_grad(&mut self) {
        for block in self.param_blocks() {
            block.grad.fill(0.0);
        }
    }

    fn num_params(&mut self) -> usize {
        self.param_blocks().iter().map(|b| b.value.len()).sum()
    }
}

pub(crate) fn prefixed<'a>(prefix: &str, blocks: Vec<ParamBlock<'a>>) -> impl Iterator<Item = ParamBlock<'a>> + 'a {
    let prefix = prefix.to_owned();
    blocks.into_iter().map(move |mut b| {
        b.name = format!("{prefix}.{}", b.name);
        b
    })
}
