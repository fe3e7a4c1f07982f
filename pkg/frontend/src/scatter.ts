// Disparity-vs-size scatter: one point per group, x = size on a log scale,
// y = normalized score, colored by one attribute chosen by the viewer.
// Wildcard groups fall into an "all of the above" bucket.

import { ScatterRow, conditionsOf } from './types.js'

export interface ScatterState {
  schema: Record<string, string[]>
  colorBy: string
  minSize: number
  selected: string | null
  flagged: Set<string> // top-ranked groups get a visual flag
  onSelect: (group: string) => void
}

const WIDTH = 680
const HEIGHT = 420
const PAD = 44
const PALETTE = [
  '#4269d0', '#efb118', '#ff725c', '#6cc5b0', '#3ca951',
  '#ff8ab7', '#a463f2', '#97bbf5',
]
export const WILDCARD_BUCKET = 'all of the above'

const SVG_NS = 'http://www.w3.org/2000/svg'

export function renderScatter(host: HTMLElement, rows: ScatterRow[], state: ScatterState): void {
  host.replaceChildren()
  if (rows.length === 0) {
    const empty = document.createElement('div')
    empty.className = 'empty-state'
    empty.textContent = 'No groups to plot: the report is empty.'
    host.append(empty)
    return
  }

  const shown = rows.filter(row => row.size >= state.minSize)
  const values = state.schema[state.colorBy] ?? []
  const colorOf = (group: string): string => {
    const value = conditionsOf(group).get(state.colorBy)
    if (value === undefined) return '#9aa0a6' // wildcard bucket
    return PALETTE[values.indexOf(value) % PALETTE.length]
  }

  const logs = shown.map(row => Math.log10(Math.max(row.size, 1)))
  const lo = Math.min(...logs)
  const hi = Math.max(...logs)
  const span = hi - lo || 1
  const x = (size: number) =>
    PAD + ((Math.log10(Math.max(size, 1)) - lo) / span) * (WIDTH - 2 * PAD)
  const y = (normalized: number) => HEIGHT - PAD - normalized * (HEIGHT - 2 * PAD)

  const svg = document.createElementNS(SVG_NS, 'svg')
  svg.setAttribute('viewBox', `0 0 ${WIDTH} ${HEIGHT}`)
  svg.setAttribute('class', 'scatter')
  svg.append(axes())

  for (const row of shown) {
    const point = document.createElementNS(SVG_NS, 'circle')
    point.setAttribute('cx', x(row.size).toFixed(2))
    point.setAttribute('cy', y(row.normalized).toFixed(2))
    point.setAttribute('r', state.flagged.has(row.group) ? '7' : '4')
    point.setAttribute('fill', colorOf(row.group))
    point.dataset.group = row.group
    let cls = 'pt'
    if (state.flagged.has(row.group)) cls += ' flagged'
    if (state.selected === row.group) cls += ' selected'
    point.setAttribute('class', cls)
    const tip = document.createElementNS(SVG_NS, 'title')
    tip.textContent =
      `${row.group}\nsize ${String(row.size)}, score ${String(row.normalized)}`
    point.append(tip)
    point.addEventListener('click', () => state.onSelect(row.group))
    svg.append(point)
  }
  host.append(svg, legend(values))
}

function axes(): SVGGElement {
  const g = document.createElementNS(SVG_NS, 'g')
  g.setAttribute('class', 'axes')
  const frame = document.createElementNS(SVG_NS, 'path')
  frame.setAttribute(
    'd',
    `M ${PAD} ${PAD} L ${PAD} ${HEIGHT - PAD} L ${WIDTH - PAD} ${HEIGHT - PAD}`,
  )
  frame.setAttribute('fill', 'none')
  frame.setAttribute('stroke', '#777')
  const xLabel = document.createElementNS(SVG_NS, 'text')
  xLabel.setAttribute('x', String(WIDTH / 2))
  xLabel.setAttribute('y', String(HEIGHT - 8))
  xLabel.textContent = 'group size (log scale)'
  const yLabel = document.createElementNS(SVG_NS, 'text')
  yLabel.setAttribute('x', '14')
  yLabel.setAttribute('y', String(HEIGHT / 2))
  yLabel.setAttribute('transform', `rotate(-90 14 ${HEIGHT / 2})`)
  yLabel.textContent = 'normalized disparity'
  g.append(frame, xLabel, yLabel)
  return g
}

function legend(values: string[]): HTMLElement {
  const box = document.createElement('div')
  box.className = 'legend'
  const buckets = [...values, WILDCARD_BUCKET]
  buckets.forEach((value, i) => {
    const entry = document.createElement('span')
    entry.className = 'legend-entry'
    entry.dataset.value = value
    const swatch = document.createElement('span')
    swatch.className = 'swatch'
    swatch.style.background =
      value === WILDCARD_BUCKET ? '#9aa0a6' : PALETTE[i % PALETTE.length]
    entry.append(swatch, document.createTextNode(value))
    box.append(entry)
  })
  return box
}
